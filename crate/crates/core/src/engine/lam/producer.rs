//! Lazy fixpoint producers: semi-naive evaluation of a group of predicates,
//! one new tuple at a time, with per-consumer cursors over the results.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Range;
use std::sync::Arc;

use crate::engine::compile::{CRule, Goal};
use crate::engine::cursor::BodyCursor;
use crate::engine::{Db, RuleState};
use crate::error::Result;
use crate::store::{Insert, Relation, Tuple};

struct Variant {
    rule: usize,
    ranges: Vec<Option<Range<usize>>>,
}

pub struct Producer {
    pub group: usize,
    preds: BTreeSet<Arc<str>>,
    rels: Db,
    rules: Vec<RuleState>,
    rec: Vec<Vec<usize>>,
    round: usize,
    /// Relation sizes at the start of the previous and the current round.
    prev_start: BTreeMap<Arc<str>, usize>,
    cur_start: BTreeMap<Arc<str>, usize>,
    queue: VecDeque<Variant>,
    current: Option<(usize, BodyCursor)>,
    inserted_this_round: bool,
    /// The fixpoint flag: set when a full round derives nothing new.
    pub fixpoint: bool,
    /// Inserts by rules that read the group itself, per predicate.
    pub extensions: BTreeMap<Arc<str>, u64>,
    pub inserts: u64,
}

impl Producer {
    pub fn new(group: usize, preds: BTreeSet<Arc<str>>, rules: Vec<CRule>) -> Producer {
        let mut rels = Db::new();
        for r in &rules {
            rels.ensure(&r.head_pred, r.head.len());
        }
        let rec = rules.iter().map(|r| r.goals_over(&preds)).collect();
        Producer {
            group,
            preds,
            rels,
            rules: rules.into_iter().map(RuleState::new).collect(),
            rec,
            round: 0,
            prev_start: BTreeMap::new(),
            cur_start: BTreeMap::new(),
            queue: VecDeque::new(),
            current: None,
            inserted_this_round: false,
            fixpoint: false,
            extensions: BTreeMap::new(),
            inserts: 0,
        }
    }

    pub fn relation(&self, pred: &str) -> Option<&Relation> {
        self.rels.get(pred)
    }

    pub fn preds(&self) -> &BTreeSet<Arc<str>> {
        &self.preds
    }

    fn lens(&self) -> BTreeMap<Arc<str>, usize> {
        self.preds.iter().map(|p| (p.clone(), self.rels.len_of(p))).collect()
    }

    /// Rule order for a round: rules of the demanded predicate first.
    fn rule_order(&self, demanded: &str) -> Vec<usize> {
        let n = self.rules.len();
        let mut order: Vec<usize> = (0..n).filter(|&i| &*self.rules[i].rule.head_pred == demanded).collect();
        order.extend((0..n).filter(|&i| &*self.rules[i].rule.head_pred != demanded));
        order
    }

    fn start_round(&mut self, demanded: &str) {
        let now = self.lens();
        self.prev_start = std::mem::replace(&mut self.cur_start, now);
        self.inserted_this_round = false;
        let order = self.rule_order(demanded);
        if self.round == 0 {
            for i in order {
                let n = self.rules[i].rule.goals.len();
                self.queue.push_back(Variant { rule: i, ranges: vec![None; n] });
            }
            return;
        }
        let window = |p: &str| -> (usize, usize) {
            (self.prev_start.get(p).copied().unwrap_or(0), self.cur_start.get(p).copied().unwrap_or(0))
        };
        for i in order {
            let rule = &self.rules[i].rule;
            for (vi, &gi) in self.rec[i].iter().enumerate() {
                let Goal::Atom { pred, .. } = &rule.goals[gi] else { continue };
                let (old, cur) = window(pred);
                if old == cur {
                    continue;
                }
                let mut ranges = vec![None; rule.goals.len()];
                for (vj, &gj) in self.rec[i].iter().enumerate() {
                    let Goal::Atom { pred, .. } = &rule.goals[gj] else { continue };
                    let (o, c) = window(pred);
                    ranges[gj] = Some(match vj.cmp(&vi) {
                        std::cmp::Ordering::Less => 0..o,
                        std::cmp::Ordering::Equal => o..c,
                        std::cmp::Ordering::Greater => 0..c,
                    });
                }
                self.queue.push_back(Variant { rule: i, ranges });
            }
        }
    }

    /// Derive until one new tuple is inserted. Returns false at the fixpoint.
    pub fn step(&mut self, demanded: &str, db: &Db) -> Result<bool> {
        loop {
            if self.fixpoint {
                return Ok(false);
            }
            if let Some((ri, cursor)) = self.current.as_mut() {
                let ri = *ri;
                let (rels, preds) = (&self.rels, &self.preds);
                let lookup = |name: &str| if preds.contains(name) { rels.get(name) } else { db.get(name) };
                let rule = &self.rules[ri].rule;
                if !cursor.next(rule, &lookup) {
                    self.current = None;
                    continue;
                }
                let mut out = Vec::new();
                self.rules[ri].derive(&cursor.frame, &mut out)?;
                if self.insert(ri, out)? {
                    return Ok(true);
                }
                continue;
            }
            if let Some(v) = self.queue.pop_front() {
                let cursor = BodyCursor::new(&self.rules[v.rule].rule, v.ranges);
                self.current = Some((v.rule, cursor));
                continue;
            }
            if self.round > 0 && !self.inserted_this_round {
                self.fixpoint = true;
                return Ok(false);
            }
            if self.round == 0 && self.cur_start.is_empty() {
                self.start_round(demanded);
                self.round = 1;
                continue;
            }
            self.start_round(demanded);
            self.round += 1;
        }
    }

    fn insert(&mut self, ri: usize, out: Vec<Tuple>) -> Result<bool> {
        let head = self.rules[ri].rule.head_pred.clone();
        let recursive = !self.rec[ri].is_empty();
        let mut any = false;
        for t in out {
            if self.rels.insert(&head, t)? == Insert::Inserted {
                any = true;
                self.inserts += 1;
                if recursive {
                    *self.extensions.entry(head.clone()).or_insert(0) += 1;
                }
            }
        }
        if any {
            self.inserted_this_round = true;
        }
        Ok(any)
    }
}
