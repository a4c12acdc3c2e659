//! Step-by-step evaluation of XY programs over old/new state pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::compile::compile_rule;
use super::eval::{eval_unit, EvalStats, RuleState};
use super::Db;
use crate::analysis::{new_name, old_name, syncbi_rule, XyClass, XyProgram};
use crate::error::{Error, Result};
use crate::lang::{Literal, Rule};
use crate::store::{Relation, StatePair, Tuple};
use crate::uda::Registry;
use crate::value::Value;

pub const COUNTER: &str = "counter";

#[derive(Clone, Debug)]
pub struct XyOptions {
    pub max_steps: usize,
    /// Share the old relation as the new one instead of running copy rules.
    pub copy_opt: bool,
    /// Keep the new relations of every step in [`XyRun::snapshots`].
    pub record: bool,
}

impl Default for XyOptions {
    fn default() -> Self {
        XyOptions { max_steps: 10_000, copy_opt: true, record: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XyOutcome {
    /// A step left every state unchanged.
    Fixpoint,
    /// A state every Y-rule depends on became empty.
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSnapshot {
    pub step: usize,
    pub rels: BTreeMap<Arc<str>, Vec<Tuple>>,
}

#[derive(Clone, Debug)]
pub struct XyRun {
    pub preds: Vec<Arc<str>>,
    pub outcome: XyOutcome,
    /// Number of steps whose results were emitted.
    pub steps: usize,
    /// Copy rules replaced by sharing, summed over steps.
    pub shared: usize,
    pub snapshots: Vec<StepSnapshot>,
    pub stats: EvalStats,
}

fn reads(r: &Rule, pred: &str) -> bool {
    r.body.iter().any(|l| l.atom().is_some_and(|a| &*a.pred == pred))
}

/// Copy rules that may be replaced by sharing: every other reader of the old
/// relation sits in a strictly lower bistate stratum.
fn shareable(x: &XyProgram) -> BTreeMap<Arc<str>, usize> {
    let mut out = BTreeMap::new();
    for (i, b) in x.bistate.iter().enumerate() {
        let Some(q) = &b.copy_of else { continue };
        let s = x.strata.of(&new_name(q));
        let old = old_name(q);
        let ok = x.bistate.iter().enumerate().all(|(k, o)| {
            k == i || !reads(&o.rule, &old) || x.strata.of(&o.rule.head.pred) < s
        });
        if ok {
            out.insert(q.clone(), i);
        }
    }
    out
}

/// Predicates whose old state is a positive goal of every Y-rule.
fn required_by_all_y(x: &XyProgram) -> Vec<Arc<str>> {
    x.preds
        .iter()
        .filter(|q| {
            let old = old_name(q);
            let mut ys = x.bistate.iter().filter(|b| b.class == XyClass::Y).peekable();
            ys.peek().is_some()
                && ys.all(|b| b.rule.body.iter().any(|l| matches!(l, Literal::Atom { atom, negated: false } if atom.pred == old)))
        })
        .cloned()
        .collect()
}

pub fn xy_evaluate(x: &XyProgram, registry: &Registry, db: &mut Db, opts: &XyOptions) -> Result<XyRun> {
    let compiled = x
        .bistate
        .iter()
        .map(|b| compile_rule(&syncbi_rule(b), registry, &BTreeSet::new()))
        .collect::<Result<Vec<_>>>()?;
    let strata = x.strata.strata();
    let share = if opts.copy_opt { shareable(x) } else { BTreeMap::new() };
    let required = required_by_all_y(x);
    let mut pairs: BTreeMap<Arc<str>, StatePair> = BTreeMap::new();
    for q in &x.preds {
        let n = x.arity[q];
        db.ensure(q, n);
        pairs.insert(q.clone(), StatePair::new(q, n.saturating_sub(1)));
    }
    let mut run = XyRun {
        preds: x.preds.clone(),
        outcome: XyOutcome::Fixpoint,
        steps: 0,
        shared: 0,
        snapshots: Vec::new(),
        stats: EvalStats::default(),
    };
    let mut step = 0usize;
    loop {
        if step >= opts.max_steps {
            return Err(Error::StepLimit { steps: step });
        }
        if step > 0 && required.iter().any(|q| pairs[q].old.is_empty()) {
            run.outcome = XyOutcome::EarlyStop;
            break;
        }
        let mut counter = Relation::new(COUNTER, 1);
        counter.insert_if_new(Tuple::new(vec![Value::Int(step as i64)]))?;
        db.put(COUNTER, counter);
        for (q, pair) in pairs.iter_mut() {
            let arity = pair.old.arity();
            db.put(&old_name(q), std::mem::replace(&mut pair.old, Relation::new(&old_name(q), arity)));
            db.put(&new_name(q), std::mem::replace(&mut pair.new, Relation::new(&new_name(q), arity)));
        }
        let mut moved: BTreeMap<Arc<str>, usize> = BTreeMap::new();
        for (s, preds) in strata.iter().enumerate() {
            let mut skip = BTreeSet::new();
            for (q, &ci) in &share {
                if preds.contains(&new_name(q)) {
                    let old = db.remove(&old_name(q)).expect("installed");
                    let arity = old.arity();
                    moved.insert(q.clone(), old.len());
                    db.put(&new_name(q), old);
                    db.put(&old_name(q), Relation::new(&old_name(q), arity));
                    skip.insert(ci);
                    run.shared += 1;
                }
            }
            let mut rules: Vec<RuleState> = compiled
                .iter()
                .enumerate()
                .filter(|(i, c)| !skip.contains(i) && x.strata.of(&c.head_pred) == Some(s))
                .map(|(_, c)| RuleState::new(c.clone()))
                .collect();
            if rules.is_empty() {
                continue;
            }
            let heads: BTreeSet<Arc<str>> = rules.iter().map(|r| r.rule.head_pred.clone()).collect();
            eval_unit(db, &heads, &mut rules, &mut run.stats)?;
        }
        // The state repeats once every new relation equals its old one. States
        // may shrink, so a subset is not enough.
        let productive = x.preds.iter().any(|q| {
            let new = db.get(&new_name(q)).expect("installed");
            match moved.get(q) {
                Some(&n) => new.len() != n,
                None => {
                    let old = db.get(&old_name(q)).expect("installed");
                    new.len() != old.len() || new.iter().any(|t| !old.contains(t))
                }
            }
        });
        if productive {
            let mut snap = BTreeMap::new();
            for q in &x.preds {
                let new = db.get(&new_name(q)).expect("installed");
                let rows: Vec<Tuple> = new
                    .iter()
                    .map(|t| {
                        let mut v = Vec::with_capacity(t.len() + 1);
                        v.push(Value::Int(step as i64));
                        v.extend(t.iter().cloned());
                        Tuple::new(v)
                    })
                    .collect();
                if opts.record {
                    snap.insert(q.clone(), new.sorted());
                }
                for t in rows {
                    db.insert(q, t)?;
                }
            }
            if opts.record {
                run.snapshots.push(StepSnapshot { step, rels: snap });
            }
        }
        for (q, pair) in pairs.iter_mut() {
            pair.old = db.remove(&old_name(q)).expect("installed");
            pair.new = db.remove(&new_name(q)).expect("installed");
            pair.swap_state();
            pair.reclaim();
        }
        if !productive {
            break;
        }
        run.steps += 1;
        step += 1;
    }
    db.remove(COUNTER);
    Ok(run)
}
