//! Evaluation: eager iterated fixpoint, XY programs and the pipelined
//! get-tuple machine.

pub mod compile;
pub mod cursor;
mod eval;
pub mod lam;
mod xy;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use compile::{compile_rule, order_body, CRule, Frame, Goal};
pub use eval::{eval_unit, iterated_fixpoint, materialize, EvalStats, RuleState};
pub use xy::{xy_evaluate, StepSnapshot, XyOptions, XyOutcome, XyRun};

use crate::analysis::Analysis;
use crate::error::Result;
use crate::lang::Atom;
use crate::store::{Insert, Relation, Tuple};
use crate::value::Value;

/// Named relations of one evaluation.
#[derive(Debug, Default)]
pub struct Db {
    rels: HashMap<Arc<str>, Relation>,
}

impl Db {
    pub fn new() -> Db {
        Db::default()
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.rels.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Relation> {
        self.rels.get_mut(name)
    }

    pub fn ensure(&mut self, name: &str, arity: usize) -> &mut Relation {
        self.rels.entry(Arc::from(name)).or_insert_with(|| Relation::new(name, arity))
    }

    pub fn insert(&mut self, name: &str, t: Tuple) -> Result<Insert> {
        let arity = t.len();
        self.ensure(name, arity).insert_if_new(t)
    }

    pub fn put(&mut self, name: &str, r: Relation) -> Option<Relation> {
        self.rels.insert(Arc::from(name), r)
    }

    pub fn remove(&mut self, name: &str) -> Option<Relation> {
        self.rels.remove(name)
    }

    pub fn len_of(&self, name: &str) -> usize {
        self.get(name).map_or(0, Relation::len)
    }

    /// Sorted contents of a relation, empty when absent.
    pub fn sorted(&self, name: &str) -> Vec<Tuple> {
        self.get(name).map(Relation::sorted).unwrap_or_default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rels.keys().map(|k| &**k)
    }
}

/// Ground argument values of a fact.
pub fn fact_tuple(a: &Atom) -> Option<Tuple> {
    a.args.iter().map(|t| t.ground_value()).collect::<Option<Vec<Value>>>().map(Tuple::new)
}

/// Insert the base facts of `a`, shuffled when a seed is given, and create
/// empty relations for every other known predicate.
pub fn load_base_facts(a: &Analysis, db: &mut Db, seed: Option<u64>) -> Result<()> {
    let mut facts: Vec<&Atom> = a.base_facts.iter().collect();
    if let Some(seed) = seed {
        facts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    for (p, &n) in &a.arity {
        db.ensure(p, n);
    }
    for f in facts {
        if let Some(t) = fact_tuple(f) {
            db.insert(&f.pred, t)?;
        }
    }
    Ok(())
}

/// Sorted contents of every derived and base relation of `a`.
pub fn model(a: &Analysis, db: &Db) -> BTreeMap<Arc<str>, Vec<Tuple>> {
    a.arity.keys().map(|p| (p.clone(), db.sorted(p))).collect()
}
