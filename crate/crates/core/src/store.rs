//! In-memory fact base.
//!
//! Relations are insertion-ordered sets so that semi-naive evaluation and lazy
//! producers can address "the tuples added since position k" without copying.
//! Positions are stable: tuples are only ever appended, and a relation is
//! emptied as a whole.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Deref, Range};
use std::sync::Arc;

use indexmap::{IndexMap, IndexSet};

use crate::error::{Error, Result};
use crate::value::Value;

/// Relations at or below this size are always scanned in full.
pub const INDEX_THRESHOLD: usize = 64;

/// A ground tuple of fixed arity.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple(Arc<[Value]>);

impl Tuple {
    pub fn new(values: Vec<Value>) -> Tuple {
        Tuple(values.into())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }
}

impl Deref for Tuple {
    type Target = [Value];

    fn deref(&self) -> &[Value] {
        &self.0
    }
}

impl std::borrow::Borrow<[Value]> for Tuple {
    fn borrow(&self) -> &[Value] {
        &self.0
    }
}

impl From<Vec<Value>> for Tuple {
    fn from(v: Vec<Value>) -> Tuple {
        Tuple::new(v)
    }
}

impl fmt::Debug for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insert {
    Inserted,
    Duplicate,
}

/// One position of a scan pattern.
#[derive(Clone, Debug, PartialEq)]
pub enum Pat {
    Bound(Value),
    Free,
}

#[derive(Default, Debug)]
struct Index {
    buckets: HashMap<Vec<Value>, Vec<usize>>,
    /// Number of leading tuples already indexed.
    covered: usize,
}

/// A duplicate-free relation with lazily built binding-pattern indexes.
#[derive(Debug)]
pub struct Relation {
    name: Arc<str>,
    arity: usize,
    tuples: IndexSet<Tuple>,
    indexes: RefCell<HashMap<u64, Index>>,
}

fn mask_of(pattern: &[Pat]) -> u64 {
    pattern
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p, Pat::Bound(_)))
        .fold(0u64, |m, (i, _)| m | (1 << i.min(63)))
}

fn key_of(t: &[Value], mask: u64) -> Vec<Value> {
    t.iter().enumerate().filter(|(i, _)| mask & (1 << (*i).min(63)) != 0).map(|(_, v)| v.clone()).collect()
}

fn matches(t: &[Value], pattern: &[Pat]) -> bool {
    t.iter().zip(pattern).all(|(v, p)| match p {
        Pat::Bound(b) => v == b,
        Pat::Free => true,
    })
}

impl Relation {
    pub fn new(name: &str, arity: usize) -> Relation {
        Relation {
            name: Arc::from(name),
            arity,
            tuples: IndexSet::new(),
            indexes: RefCell::new(HashMap::new()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &[Value]) -> bool {
        self.tuples.contains(t)
    }

    pub fn get(&self, pos: usize) -> Option<&Tuple> {
        self.tuples.get_index(pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    /// Insert with set semantics.
    pub fn insert_if_new(&mut self, t: Tuple) -> Result<Insert> {
        if t.len() != self.arity {
            return Err(Error::Store {
                pred: self.name.to_string(),
                message: format!("tuple {t} has arity {}, expected {}", t.len(), self.arity),
            });
        }
        Ok(if self.tuples.insert(t) { Insert::Inserted } else { Insert::Duplicate })
    }

    /// Remove every tuple and index.
    pub fn clear(&mut self) {
        self.tuples.clear();
        self.indexes.get_mut().clear();
    }

    /// Number of indexes currently materialized.
    pub fn index_count(&self) -> usize {
        self.indexes.borrow().len()
    }

    /// Positions in `range` of the tuples matching `pattern`, ascending.
    pub fn matching_positions(&self, pattern: &[Pat], range: Range<usize>) -> Vec<usize> {
        self.positions(pattern, range, true)
    }

    fn positions(&self, pattern: &[Pat], range: Range<usize>, allow_index: bool) -> Vec<usize> {
        let range = range.start.min(self.len())..range.end.min(self.len());
        if range.is_empty() {
            return Vec::new();
        }
        let mask = mask_of(pattern);
        if mask == 0 || !allow_index || self.len() <= INDEX_THRESHOLD || pattern.len() > 63 {
            return range.filter(|&i| matches(&self.tuples[i], pattern)).collect();
        }
        let mut indexes = self.indexes.borrow_mut();
        let index = indexes.entry(mask).or_default();
        while index.covered < self.tuples.len() {
            let pos = index.covered;
            index.buckets.entry(key_of(&self.tuples[pos], mask)).or_default().push(pos);
            index.covered += 1;
        }
        let key: Vec<Value> =
            pattern.iter().filter_map(|p| if let Pat::Bound(v) = p { Some(v.clone()) } else { None }).collect();
        match index.buckets.get(&key) {
            None => Vec::new(),
            Some(bucket) => {
                let lo = bucket.partition_point(|&p| p < range.start);
                let hi = bucket.partition_point(|&p| p < range.end);
                bucket[lo..hi].to_vec()
            }
        }
    }

    /// Tuples matching `pattern`, in insertion order.
    pub fn scan(&self, pattern: &[Pat]) -> Vec<Tuple> {
        self.matching_positions(pattern, 0..self.len()).into_iter().map(|i| self.tuples[i].clone()).collect()
    }

    /// Same result as `scan` but never consults or builds an index.
    pub fn scan_unindexed(&self, pattern: &[Pat]) -> Vec<Tuple> {
        self.positions(pattern, 0..self.len(), false).into_iter().map(|i| self.tuples[i].clone()).collect()
    }

    /// Move the contents out, leaving this relation empty.
    pub fn take(&mut self) -> Relation {
        let mut out = Relation::new(&self.name, self.arity);
        std::mem::swap(&mut out.tuples, &mut self.tuples);
        std::mem::swap(out.indexes.get_mut(), self.indexes.get_mut());
        out
    }

    /// Sorted copy of the tuples, for deterministic output.
    pub fn sorted(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.tuples.iter().cloned().collect();
        v.sort();
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdInsert {
    Accepted,
    Violates,
}

/// Memo of the choices made by one choice rule.
///
/// `W` is the vector of all variables in the rule's choice goals. Each goal
/// is given as the positions of its left and right variables within `W`.
#[derive(Clone, Debug, Default)]
pub struct ChosenTable {
    goals: Vec<(Vec<usize>, Vec<usize>)>,
    maps: Vec<HashMap<Vec<Value>, Vec<Value>>>,
    chosen: IndexSet<Tuple>,
    width: usize,
}

impl ChosenTable {
    pub fn new(width: usize, goals: Vec<(Vec<usize>, Vec<usize>)>) -> ChosenTable {
        let maps = goals.iter().map(|_| HashMap::new()).collect();
        ChosenTable { goals, maps, chosen: IndexSet::new(), width }
    }

    /// Accept `w` when it agrees with every functional dependency so far.
    pub fn fd_insert(&mut self, w: &[Value]) -> FdInsert {
        assert_eq!(w.len(), self.width, "chosen tuple width");
        if self.chosen.contains(w) {
            return FdInsert::Accepted;
        }
        let project = |ix: &[usize]| ix.iter().map(|&i| w[i].clone()).collect::<Vec<_>>();
        let mut pending = Vec::with_capacity(self.goals.len());
        for (g, (left, right)) in self.goals.iter().enumerate() {
            let (l, r) = (project(left), project(right));
            match self.maps[g].get(&l) {
                Some(existing) if *existing != r => return FdInsert::Violates,
                Some(_) => {}
                None => pending.push((g, l, r)),
            }
        }
        for (g, l, r) in pending {
            self.maps[g].insert(l, r);
        }
        self.chosen.insert(Tuple::new(w.to_vec()));
        FdInsert::Accepted
    }

    /// The chosen(W) set in acceptance order.
    pub fn chosen(&self) -> impl Iterator<Item = &Tuple> {
        self.chosen.iter()
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// Check the functional-dependency invariant from scratch.
    pub fn is_functional(&self) -> bool {
        self.goals.iter().all(|(left, right)| {
            let mut seen: HashMap<Vec<Value>, Vec<Value>> = HashMap::new();
            self.chosen.iter().all(|w| {
                let l: Vec<Value> = left.iter().map(|&i| w[i].clone()).collect();
                let r: Vec<Value> = right.iter().map(|&i| w[i].clone()).collect();
                match seen.get(&l) {
                    Some(prev) => *prev == r,
                    None => {
                        seen.insert(l, r);
                        true
                    }
                }
            })
        })
    }

    pub fn clear(&mut self) {
        self.chosen.clear();
        self.maps.iter_mut().for_each(HashMap::clear);
    }
}

/// Running state of one aggregate group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCursor {
    pub key: Vec<Value>,
    pub state: Value,
    pub count: u64,
    pub last_element: Option<Value>,
    pub last_early: Option<Value>,
}

impl GroupCursor {
    pub fn new(key: Vec<Value>) -> GroupCursor {
        GroupCursor { key, state: Value::sym("nil"), count: 0, last_element: None, last_early: None }
    }
}

/// Group states of one aggregate invocation, in group creation order.
#[derive(Clone, Debug, Default)]
pub struct AggStateTable {
    groups: IndexMap<Vec<Value>, GroupCursor>,
}

impl AggStateTable {
    pub fn new() -> AggStateTable {
        AggStateTable::default()
    }

    pub fn group(&mut self, key: &[Value]) -> &mut GroupCursor {
        if !self.groups.contains_key(key) {
            self.groups.insert(key.to_vec(), GroupCursor::new(key.to_vec()));
        }
        self.groups.get_mut(key).expect("group just inserted")
    }

    pub fn get(&self, key: &[Value]) -> Option<&GroupCursor> {
        self.groups.get(key)
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupCursor> {
        self.groups.values()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn clear(&mut self) {
        self.groups.clear();
    }
}

/// The old and new versions of an XY-recursive predicate.
#[derive(Debug)]
pub struct StatePair {
    pub old: Relation,
    pub new: Relation,
    retired: Vec<Relation>,
}

impl StatePair {
    pub fn new(name: &str, arity: usize) -> StatePair {
        StatePair { old: Relation::new(name, arity), new: Relation::new(name, arity), retired: Vec::new() }
    }

    /// Make `old` the former `new` and start an empty `new`.
    ///
    /// The previous `old` is parked rather than dropped so the cost does not
    /// depend on its size; `reclaim` frees parked relations.
    pub fn swap_state(&mut self) {
        let fresh = Relation::new(self.new.name(), self.new.arity());
        let former_new = std::mem::replace(&mut self.new, fresh);
        let former_old = std::mem::replace(&mut self.old, former_new);
        self.retired.push(former_old);
    }

    /// Move `old` into an empty `new` (the copy-rule shortcut).
    pub fn share_old_as_new(&mut self) {
        debug_assert!(self.new.is_empty());
        let old = self.old.take();
        self.retired.push(std::mem::replace(&mut self.new, old));
    }

    pub fn reclaim(&mut self) {
        self.retired.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(vals: &[&str]) -> Tuple {
        Tuple::new(vals.iter().map(|s| Value::sym(s)).collect())
    }

    #[test]
    fn insert_reports_duplicates() {
        let mut r = Relation::new("p", 2);
        assert_eq!(r.insert_if_new(t(&["a", "b"])).unwrap(), Insert::Inserted);
        assert_eq!(r.insert_if_new(t(&["a", "b"])).unwrap(), Insert::Duplicate);
        assert!(r.insert_if_new(t(&["a"])).is_err());
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn scan_with_bound_position() {
        let mut r = Relation::new("parent", 2);
        for (c, p) in [("marc", "anna"), ("anna", "zoe"), ("marc", "bob")] {
            r.insert_if_new(t(&[c, p])).unwrap();
        }
        let got = r.scan(&[Pat::Bound(Value::sym("marc")), Pat::Free]);
        assert_eq!(got, vec![t(&["marc", "anna"]), t(&["marc", "bob"])]);
        assert_eq!(r.scan(&[Pat::Free, Pat::Free]).len(), 3);
    }

    #[test]
    fn index_is_built_lazily_and_kept_current() {
        let mut r = Relation::new("e", 2);
        for i in 0..200 {
            r.insert_if_new(Tuple::new(vec![Value::Int(i % 10), Value::Int(i)])).unwrap();
        }
        assert_eq!(r.index_count(), 0);
        let pat = [Pat::Bound(Value::Int(3)), Pat::Free];
        assert_eq!(r.scan(&pat).len(), 20);
        assert_eq!(r.index_count(), 1);
        r.insert_if_new(Tuple::new(vec![Value::Int(3), Value::Int(1000)])).unwrap();
        assert_eq!(r.scan(&pat), r.scan_unindexed(&pat));
        assert_eq!(r.matching_positions(&pat, 100..201), vec![103, 113, 123, 133, 143, 153, 163, 173, 183, 193, 200]);
    }

    #[test]
    fn fd_insert_advisor() {
        let mut ct = ChosenTable::new(2, vec![(vec![0], vec![1])]);
        let w = |p: &str| vec![Value::sym("jimBlack"), Value::sym(p)];
        assert_eq!(ct.fd_insert(&w("ohm")), FdInsert::Accepted);
        assert_eq!(ct.fd_insert(&w("bell")), FdInsert::Violates);
        assert_eq!(ct.fd_insert(&w("ohm")), FdInsert::Accepted);
        assert_eq!(ct.len(), 1);
    }

    #[test]
    fn fd_insert_empty_left_side() {
        let mut ct = ChosenTable::new(1, vec![(vec![], vec![0])]);
        assert_eq!(ct.fd_insert(&[Value::Int(1)]), FdInsert::Accepted);
        assert_eq!(ct.fd_insert(&[Value::Int(2)]), FdInsert::Violates);
    }

    #[test]
    fn fd_insert_is_atomic_across_goals() {
        // choice((X),(Y)), choice((Y),(X))
        let mut ct = ChosenTable::new(2, vec![(vec![0], vec![1]), (vec![1], vec![0])]);
        let w = |a: i64, b: i64| vec![Value::Int(a), Value::Int(b)];
        assert_eq!(ct.fd_insert(&w(0, 1)), FdInsert::Accepted);
        // Left projection 2 is new but Y=1 already maps to X=0.
        assert_eq!(ct.fd_insert(&w(2, 1)), FdInsert::Violates);
        // The rejected tuple must not leave X=2 bound.
        assert_eq!(ct.fd_insert(&w(2, 3)), FdInsert::Accepted);
        assert!(ct.is_functional());
    }

    #[test]
    fn swap_state_moves_new_to_old() {
        let mut sp = StatePair::new("q", 2);
        sp.old.insert_if_new(Tuple::new(vec![Value::Int(0), Value::sym("m")])).unwrap();
        sp.new.insert_if_new(Tuple::new(vec![Value::Int(1), Value::sym("a")])).unwrap();
        sp.swap_state();
        assert_eq!(sp.old.sorted(), vec![Tuple::new(vec![Value::Int(1), Value::sym("a")])]);
        assert!(sp.new.is_empty());
        sp.swap_state();
        assert!(sp.old.is_empty());
        sp.reclaim();
    }

    #[test]
    fn agg_state_groups_keep_creation_order() {
        let mut table = AggStateTable::new();
        table.group(&[Value::Int(2)]).count += 1;
        table.group(&[Value::Int(1)]).count += 1;
        table.group(&[Value::Int(2)]).count += 1;
        let counts: Vec<u64> = table.groups().map(|g| g.count).collect();
        assert_eq!(counts, vec![2, 1]);
    }
}
