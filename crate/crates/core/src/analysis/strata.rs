use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::graph::{build_graph_with, PredicateGraph};
use crate::error::{Error, Result};
use crate::lang::Program;
use crate::uda::Registry;

/// Stratum number of every predicate. Base predicates sit in stratum 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stratification {
    pub stratum: BTreeMap<Arc<str>, usize>,
}

impl Stratification {
    pub fn of(&self, pred: &str) -> Option<usize> {
        self.stratum.get(pred).copied()
    }

    pub fn strata(&self) -> Vec<BTreeSet<Arc<str>>> {
        let n = self.stratum.values().max().map_or(0, |m| m + 1);
        let mut out = vec![BTreeSet::new(); n];
        for (p, &s) in &self.stratum {
            out[s].insert(p.clone());
        }
        out
    }
}

impl fmt::Display for Stratification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.strata().iter().enumerate() {
            let names: Vec<&str> = s.iter().map(|p| &**p).collect();
            writeln!(f, "S{i} = {{{}}}", names.join(", "))?;
        }
        Ok(())
    }
}

/// Reject strict edges (negation, nonmonotone aggregation) inside a component.
pub fn check_strict_edges(g: &PredicateGraph, skip: impl Fn(usize) -> bool) -> Result<()> {
    for e in &g.edges {
        let c = g.scc_of(&e.from);
        if e.polarity.is_strict() && c == g.scc_of(&e.to) && !c.is_some_and(&skip) {
            return Err(Error::NotStratified { cycle: g.cycle_through(e) });
        }
    }
    Ok(())
}

/// Longest-path layering of the components, where `unit[c]` merges
/// components that must share a stratum. Every edge between different units
/// raises the stratum by one.
pub fn layer(g: &PredicateGraph, unit: &[usize]) -> Stratification {
    let mut level: BTreeMap<usize, usize> = BTreeMap::new();
    // Components are in dependency order, and merged units are contiguous
    // enough that iterating to a fixpoint is cheap.
    loop {
        let mut changed = false;
        for (c, comp) in g.sccs.iter().enumerate() {
            let u = unit[c];
            let mut l = level.get(&u).copied().unwrap_or(0);
            for p in comp {
                for e in g.predecessors(p) {
                    let uf = unit[g.scc_of(&e.from).expect("node")];
                    if uf != u {
                        l = l.max(level.get(&uf).copied().unwrap_or(0) + 1);
                    }
                }
            }
            if level.get(&u) != Some(&l) {
                level.insert(u, l);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut stratum = BTreeMap::new();
    for (c, comp) in g.sccs.iter().enumerate() {
        for p in comp {
            stratum.insert(p.clone(), level[&unit[c]]);
        }
    }
    Stratification { stratum }
}

pub fn stratify(p: &Program) -> Result<Stratification> {
    let registry = Registry::for_program(p)?;
    stratify_with(p, &registry)
}

pub fn stratify_with(p: &Program, registry: &Registry) -> Result<Stratification> {
    let g = build_graph_with(p, registry);
    check_strict_edges(&g, |_| false)?;
    let unit: Vec<usize> = (0..g.sccs.len()).collect();
    Ok(layer(&g, &unit))
}
