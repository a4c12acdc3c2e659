//! Bottom-up semi-naive evaluation with choice and aggregates.

use std::collections::{BTreeSet, HashSet};
use std::ops::Range;
use std::sync::Arc;

use indexmap::IndexMap;

use super::compile::{build, compile_rule, pattern, run_cmp, run_func, unify, unify_all, CHead, CRule, Frame, Goal};
use super::xy::{xy_evaluate, XyOptions, XyRun};
use super::Db;
use crate::analysis::{Analysis, ComponentKind};
use crate::error::Result;
use crate::store::{AggStateTable, ChosenTable, FdInsert, Insert, Tuple};
use crate::uda;
use crate::value::Value;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub rounds: usize,
    pub derivations: u64,
    pub inserts: u64,
}

#[derive(Debug, Default)]
struct AggAcc {
    seen: HashSet<Vec<Value>>,
    tables: Vec<AggStateTable>,
    /// Returns collected so far per group and aggregate, for nonmonotone rules.
    pending: IndexMap<Vec<Value>, Vec<Vec<Value>>>,
}

#[derive(Debug, Default)]
struct Memo {
    chosen: Option<ChosenTable>,
    agg: Option<AggAcc>,
}

/// A compiled rule with the choice and aggregate state it accumulates.
#[derive(Debug)]
pub struct RuleState {
    pub rule: CRule,
    memo: Memo,
}

impl RuleState {
    pub fn new(rule: CRule) -> RuleState {
        let chosen = rule.choice.as_ref().map(|c| ChosenTable::new(c.w.len(), c.goals.clone()));
        let agg = rule.has_aggregates().then(|| AggAcc {
            tables: rule.head.iter().filter(|h| matches!(h, CHead::Agg { .. })).map(|_| AggStateTable::new()).collect(),
            ..AggAcc::default()
        });
        RuleState { rule, memo: Memo { chosen, agg } }
    }

    pub fn chosen(&self) -> Option<&ChosenTable> {
        self.memo.chosen.as_ref()
    }

    /// Seed the choice memo, e.g. to resume from an earlier model.
    pub fn set_chosen(&mut self, t: ChosenTable) {
        self.memo.chosen = Some(t);
    }

    fn collects(&self) -> bool {
        self.rule.has_aggregates() && !self.rule.is_monotone()
    }

    /// Head tuples for one body solution, after choice and aggregation.
    pub fn derive(&mut self, f: &Frame, out: &mut Vec<Tuple>) -> Result<()> {
        on_solution(&self.rule, &mut self.memo, f, out)
    }
}

fn exists(db: &Db, pred: &str, args: &[super::compile::CTerm], f: &mut Frame) -> bool {
    let Some(rel) = db.get(pred) else { return false };
    let pat = pattern(args, f);
    rel.matching_positions(&pat, 0..rel.len()).into_iter().any(|pos| {
        let m = f.mark();
        let ok = unify_all(args, rel.get(pos).expect("position"), f);
        f.undo(m);
        ok
    })
}

/// Enumerate the solutions of the body of `cr`. `ranges[i]` restricts atom
/// goal `i` to a window of its relation; `None` means the whole relation.
pub fn solve(
    db: &Db,
    cr: &CRule,
    ranges: &[Option<Range<usize>>],
    gi: usize,
    f: &mut Frame,
    emit: &mut dyn FnMut(&Frame) -> Result<()>,
) -> Result<()> {
    if gi == cr.goals.len() {
        return emit(f);
    }
    match &cr.goals[gi] {
        Goal::Atom { pred, args } => {
            let Some(rel) = db.get(pred) else { return Ok(()) };
            let range = ranges[gi].clone().unwrap_or(0..rel.len());
            let pat = pattern(args, f);
            for pos in rel.matching_positions(&pat, range) {
                let m = f.mark();
                if unify_all(args, rel.get(pos).expect("position"), f) {
                    solve(db, cr, ranges, gi + 1, f, emit)?;
                }
                f.undo(m);
            }
        }
        Goal::Not { pred, args } => {
            if !exists(db, pred, args, f) {
                solve(db, cr, ranges, gi + 1, f, emit)?;
            }
        }
        Goal::Cmp { op, lhs, rhs } => {
            let m = f.mark();
            if run_cmp(*op, lhs, rhs, f) {
                solve(db, cr, ranges, gi + 1, f, emit)?;
            }
            f.undo(m);
        }
        Goal::Func { kind, def, inputs, out } => {
            for v in run_func(*kind, def, inputs, f) {
                let m = f.mark();
                if unify(out, &v, f) {
                    solve(db, cr, ranges, gi + 1, f, emit)?;
                }
                f.undo(m);
            }
        }
    }
    Ok(())
}

/// Head tuples for group values `group` and one return per aggregate.
fn agg_heads(cr: &CRule, group: &[Value], lists: &[Vec<Value>], out: &mut Vec<Tuple>) {
    let mut combos: Vec<Vec<Value>> = vec![Vec::new()];
    for l in lists {
        combos = combos.iter().flat_map(|c| l.iter().map(move |v| [c.clone(), vec![v.clone()]].concat())).collect();
    }
    for c in combos {
        let (mut gi, mut ai) = (0, 0);
        let mut vals = Vec::with_capacity(cr.head.len());
        for h in &cr.head {
            match h {
                CHead::Term(_) => {
                    vals.push(group[gi].clone());
                    gi += 1;
                }
                CHead::Agg { .. } => {
                    vals.push(c[ai].clone());
                    ai += 1;
                }
            }
        }
        out.push(Tuple::new(vals));
    }
}

fn on_solution(cr: &CRule, memo: &mut Memo, f: &Frame, out: &mut Vec<Tuple>) -> Result<()> {
    if let (Some(spec), Some(table)) = (&cr.choice, memo.chosen.as_mut()) {
        let Some(w) = f.values(&spec.w) else { return Ok(()) };
        if table.fd_insert(&w) == FdInsert::Violates {
            return Ok(());
        }
    }
    let Some(acc) = memo.agg.as_mut() else {
        let vals = cr
            .head
            .iter()
            .map(|h| match h {
                CHead::Term(t) => build(t, f),
                CHead::Agg { .. } => None,
            })
            .collect::<Option<Vec<_>>>();
        if let Some(vals) = vals {
            out.push(Tuple::new(vals));
        }
        return Ok(());
    };
    let Some(key) = f.values(&cr.body_slots) else { return Ok(()) };
    if !acc.seen.insert(key) {
        return Ok(());
    }
    let mut group = Vec::new();
    let mut aggs = Vec::new();
    for h in &cr.head {
        match h {
            CHead::Term(t) => match build(t, f) {
                Some(v) => group.push(v),
                None => return Ok(()),
            },
            CHead::Agg { def, arg } => match build(arg, f) {
                Some(v) => aggs.push((def.clone(), v)),
                None => return Ok(()),
            },
        }
    }
    let mut early = Vec::with_capacity(aggs.len());
    for (k, (def, y)) in aggs.iter().enumerate() {
        early.push(uda::feed(def, acc.tables[k].group(&group), y)?);
    }
    if cr.is_monotone() {
        agg_heads(cr, &group, &early, out);
    } else {
        let slot = acc.pending.entry(group).or_insert_with(|| vec![Vec::new(); aggs.len()]);
        for (k, e) in early.into_iter().enumerate() {
            slot[k].extend(e);
        }
    }
    Ok(())
}

/// Emit the results of a nonmonotone aggregate rule once its body is complete.
fn finish_aggregates(cr: &CRule, memo: &mut Memo, out: &mut Vec<Tuple>) -> Result<()> {
    let Some(acc) = memo.agg.as_mut() else { return Ok(()) };
    let defs: Vec<_> = cr
        .head
        .iter()
        .filter_map(|h| match h {
            CHead::Agg { def, .. } => Some(def.clone()),
            CHead::Term(_) => None,
        })
        .collect();
    for (group, early) in std::mem::take(&mut acc.pending) {
        let mut lists = early;
        for (k, def) in defs.iter().enumerate() {
            if let Some(gc) = acc.tables[k].get(&group) {
                lists[k].extend(uda::finalize_all(def, gc)?);
            }
        }
        agg_heads(cr, &group, &lists, out);
    }
    Ok(())
}

fn run_rule(db: &Db, st: &mut RuleState, ranges: &[Option<Range<usize>>], stats: &mut EvalStats) -> Result<Vec<Tuple>> {
    let RuleState { rule, memo } = st;
    let mut out = Vec::new();
    let mut frame = Frame::new(rule.nslots);
    solve(db, rule, ranges, 0, &mut frame, &mut |f| {
        stats.derivations += 1;
        on_solution(rule, memo, f, &mut out)
    })?;
    Ok(out)
}

fn insert_all(db: &mut Db, pred: &str, tuples: Vec<Tuple>, stats: &mut EvalStats) -> Result<()> {
    for t in tuples {
        if db.insert(pred, t)? == Insert::Inserted {
            stats.inserts += 1;
        }
    }
    Ok(())
}

/// Evaluate `rules`, whose heads are `preds`, to a fixpoint.
pub fn eval_unit(db: &mut Db, preds: &BTreeSet<Arc<str>>, rules: &mut [RuleState], stats: &mut EvalStats) -> Result<()> {
    for st in rules.iter() {
        db.ensure(&st.rule.head_pred, st.rule.head.len());
    }
    let rec: Vec<Vec<usize>> = rules.iter().map(|st| st.rule.goals_over(preds)).collect();
    let lens = |db: &Db| -> Vec<(Arc<str>, usize)> { preds.iter().map(|p| (p.clone(), db.len_of(p))).collect() };
    let mut before = lens(db);
    stats.rounds += 1;
    for st in rules.iter_mut() {
        let ranges = vec![None; st.rule.goals.len()];
        let mut out = run_rule(db, st, &ranges, stats)?;
        if st.collects() {
            let RuleState { rule, memo } = &mut *st;
            finish_aggregates(rule, memo, &mut out)?;
        }
        let pred = st.rule.head_pred.clone();
        insert_all(db, &pred, out, stats)?;
    }
    loop {
        let now = lens(db);
        let window = |p: &str| {
            let old = before.iter().find(|(q, _)| &**q == p).map_or(0, |x| x.1);
            let cur = now.iter().find(|(q, _)| &**q == p).map_or(0, |x| x.1);
            (old, cur)
        };
        if now.iter().zip(&before).all(|(a, b)| a.1 == b.1) {
            return Ok(());
        }
        stats.rounds += 1;
        for (ri, st) in rules.iter_mut().enumerate() {
            if rec[ri].is_empty() || st.collects() {
                continue;
            }
            for (vi, &gi) in rec[ri].iter().enumerate() {
                let Goal::Atom { pred, .. } = &st.rule.goals[gi] else { unreachable!() };
                let (old, cur) = window(pred);
                if old == cur {
                    continue;
                }
                let mut ranges = vec![None; st.rule.goals.len()];
                for (vj, &gj) in rec[ri].iter().enumerate() {
                    let Goal::Atom { pred, .. } = &st.rule.goals[gj] else { unreachable!() };
                    let (o, c) = window(pred);
                    ranges[gj] = Some(match vj.cmp(&vi) {
                        std::cmp::Ordering::Less => 0..o,
                        std::cmp::Ordering::Equal => o..c,
                        std::cmp::Ordering::Greater => 0..c,
                    });
                }
                let out = run_rule(db, st, &ranges, stats)?;
                let head = st.rule.head_pred.clone();
                insert_all(db, &head, out, stats)?;
            }
        }
        before = now;
    }
}

fn compile_component(a: &Analysis, rules: &[usize]) -> Result<Vec<RuleState>> {
    rules
        .iter()
        .map(|&i| compile_rule(&a.program.rules[i], &a.registry, &BTreeSet::new()).map(RuleState::new))
        .collect()
}

fn eval_component(a: &Analysis, db: &mut Db, c: usize, opts: &XyOptions, stats: &mut EvalStats) -> Result<Option<XyRun>> {
    let comp = &a.components[c];
    match &comp.kind {
        ComponentKind::Xy(x) => xy_evaluate(x, &a.registry, db, opts).map(Some),
        ComponentKind::Rules { .. } => {
            let mut rules = compile_component(a, &comp.rules)?;
            let preds: BTreeSet<Arc<str>> = comp.preds.iter().cloned().collect();
            eval_unit(db, &preds, &mut rules, stats)?;
            Ok(None)
        }
    }
}

/// Evaluate the components needed for `targets` that are not yet in `done`.
pub fn materialize<'a>(
    a: &Analysis,
    db: &mut Db,
    targets: impl IntoIterator<Item = &'a str>,
    done: &mut BTreeSet<usize>,
    opts: &XyOptions,
    stats: &mut EvalStats,
) -> Result<Vec<XyRun>> {
    let mut need: BTreeSet<Arc<str>> = BTreeSet::new();
    let mut work: Vec<Arc<str>> = targets.into_iter().map(Arc::from).collect();
    while let Some(p) = work.pop() {
        if !need.insert(p.clone()) {
            continue;
        }
        // Members of one component are needed together.
        if let Some(c) = a.component_of(&p) {
            work.extend(a.components[c].preds.iter().cloned());
        }
        work.extend(a.graph.predecessors(&p).map(|e| e.from.clone()));
    }
    let mut runs = Vec::new();
    for c in 0..a.components.len() {
        if done.contains(&c) || !a.components[c].preds.iter().any(|p| need.contains(p)) {
            continue;
        }
        if let Some(run) = eval_component(a, db, c, opts, stats)? {
            runs.push(run);
        }
        done.insert(c);
    }
    Ok(runs)
}

/// Evaluate every component bottom-up. Base facts must already be loaded.
pub fn iterated_fixpoint(a: &Analysis, db: &mut Db, opts: &XyOptions) -> Result<(EvalStats, Vec<XyRun>)> {
    let mut stats = EvalStats::default();
    let mut runs = Vec::new();
    for c in 0..a.components.len() {
        if let Some(run) = eval_component(a, db, c, opts, &mut stats)? {
            runs.push(run);
        }
    }
    Ok((stats, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::engine::load_base_facts;
    use crate::lang::parse_program;

    fn run(src: &str) -> Db {
        let a = analyze(&parse_program(src).unwrap()).unwrap();
        let mut db = Db::new();
        load_base_facts(&a, &mut db, None).unwrap();
        iterated_fixpoint(&a, &mut db, &XyOptions::default()).unwrap();
        db
    }

    fn show(db: &Db, p: &str) -> Vec<String> {
        db.sorted(p).iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn transitive_closure() {
        let db = run("e(1, 2). e(2, 3). e(3, 4). tc(X, Y) <- e(X, Y). tc(X, Z) <- tc(X, Y), e(Y, Z).");
        assert_eq!(db.len_of("tc"), 6);
    }

    #[test]
    fn negation_over_lower_stratum() {
        let db = run("n(1). n(2). n(3). odd(1). odd(3). even(X) <- n(X), ~odd(X).");
        assert_eq!(show(&db, "even"), ["(2)"]);
    }

    #[test]
    fn choice_keeps_one_advisor_per_student() {
        let db = run(
            "student('Jim Black', ee, senior). professor(ohm, ee). professor(bell, ee).
             actual_adv(S, P) <- student(S, Majr, Year), professor(P, Majr), choice((S), (P)).",
        );
        assert_eq!(db.len_of("actual_adv"), 1);
    }

    #[test]
    fn builtin_aggregates() {
        let db = run("v(a, 1). v(a, 3). v(b, 5). s(K, sum<X>) <- v(K, X). c(count<X>) <- v(_, X).");
        assert_eq!(show(&db, "s"), ["(a, 4)", "(b, 5)"]);
        assert_eq!(show(&db, "c"), ["(3)"]);
    }

    #[test]
    fn monotone_count_in_recursion() {
        let db = run(
            "friend(a, x). friend(b, x). friend(c, x). friend(a, y). friend(b, y).
             sure(x). sure(y).
             coming(P) <- sure(P).
             coming(P) <- c(P, K), K >= 3.
             c(P, mcount<F>) <- friend(F, P), coming(F).
             come(X) <- coming(X).",
        );
        assert!(db.len_of("coming") >= 2);
    }
}
