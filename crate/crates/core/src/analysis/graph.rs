use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use indexmap::IndexSet;

use crate::lang::{HeadArg, Literal, Program};
use crate::uda::{self, Registry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    Aggregate { monotone: bool },
}

impl Polarity {
    /// Edges that must point strictly upward in a stratification.
    pub fn is_strict(self) -> bool {
        matches!(self, Polarity::Negative | Polarity::Aggregate { monotone: false })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: Arc<str>,
    pub to: Arc<str>,
    pub polarity: Polarity,
    /// Index of the rule that contributes the edge.
    pub rule: usize,
}

/// Predicate dependency graph with edges from body predicates to heads.
#[derive(Clone, Debug, Default)]
pub struct PredicateGraph {
    pub nodes: IndexSet<Arc<str>>,
    pub edges: Vec<Edge>,
    /// Strongly connected components, dependencies before dependents.
    pub sccs: Vec<Vec<Arc<str>>>,
    scc_of: HashMap<Arc<str>, usize>,
}

/// Graph over `p` with aggregate monotonicity from the builtins and the
/// program's own definitions.
pub fn build_graph(p: &Program) -> PredicateGraph {
    let registry = Registry::for_program(p).unwrap_or_else(|_| uda::builtin_catalog());
    build_graph_with(p, &registry)
}

pub fn build_graph_with(p: &Program, registry: &Registry) -> PredicateGraph {
    let mut g = PredicateGraph::default();
    for s in &p.schema {
        g.nodes.insert(s.pred.clone());
    }
    for f in &p.facts {
        g.nodes.insert(f.pred.clone());
    }
    for (ri, r) in p.rules.iter().enumerate() {
        if uda::definition_target(r).is_some() {
            continue;
        }
        g.nodes.insert(r.head.pred.clone());
        let agg = r.head.args.iter().find_map(|a| match a {
            HeadArg::Aggregate { .. } => Some(()),
            _ => None,
        });
        let monotone = r.head.args.iter().all(|a| match a {
            HeadArg::Aggregate { name, .. } => registry.get(name).is_some_and(|d| d.is_monotone()),
            HeadArg::Term(_) => true,
        });
        for l in &r.body {
            let Literal::Atom { atom, negated } = l else { continue };
            if uda::is_reserved(&atom.pred) {
                continue;
            }
            g.nodes.insert(atom.pred.clone());
            let polarity = match (negated, agg) {
                (true, _) => Polarity::Negative,
                (false, Some(())) => Polarity::Aggregate { monotone },
                (false, None) => Polarity::Positive,
            };
            g.edges.push(Edge { from: atom.pred.clone(), to: r.head.pred.clone(), polarity, rule: ri });
        }
    }
    g.compute_sccs();
    g
}

impl PredicateGraph {
    pub fn scc_of(&self, pred: &str) -> Option<usize> {
        self.scc_of.get(pred).copied()
    }

    /// True when `pred` depends on itself.
    pub fn is_recursive(&self, pred: &str) -> bool {
        match self.scc_of(pred) {
            Some(c) => self.sccs[c].len() > 1 || self.edges.iter().any(|e| &*e.from == pred && &*e.to == pred),
            None => false,
        }
    }

    pub fn successors<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &*e.from == pred)
    }

    pub fn predecessors<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &*e.to == pred)
    }

    /// A cycle through the strict edge `e` whose ends share a component.
    pub fn cycle_through(&self, e: &Edge) -> Vec<String> {
        // Path from e.to back to e.from inside the component.
        let comp = self.scc_of(&e.from);
        let mut prev: HashMap<Arc<str>, Arc<str>> = HashMap::new();
        let mut queue = std::collections::VecDeque::from([e.to.clone()]);
        let mut seen: BTreeSet<Arc<str>> = BTreeSet::from([e.to.clone()]);
        while let Some(n) = queue.pop_front() {
            if n == e.from {
                break;
            }
            for s in self.successors(&n) {
                if self.scc_of(&s.to) == comp && seen.insert(s.to.clone()) {
                    prev.insert(s.to.clone(), n.clone());
                    queue.push_back(s.to.clone());
                }
            }
        }
        let mut path = vec![e.from.to_string()];
        let mut cur = e.from.clone();
        while cur != e.to {
            match prev.get(&cur) {
                Some(p) => {
                    path.push(p.to_string());
                    cur = p.clone();
                }
                None => break,
            }
        }
        path.reverse();
        path.insert(0, e.from.to_string());
        path
    }

    fn compute_sccs(&mut self) {
        let n = self.nodes.len();
        let idx = |p: &Arc<str>, nodes: &IndexSet<Arc<str>>| nodes.get_index_of(p).expect("edge endpoint is a node");
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            adj[idx(&e.from, &self.nodes)].push(idx(&e.to, &self.nodes));
        }
        // Tarjan, iterative.
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comps: Vec<Vec<usize>> = Vec::new();
        let mut counter = 0;
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut work: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = counter;
            low[root] = counter;
            counter += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut next)) = work.last_mut() {
                if *next < adj[v].len() {
                    let w = adj[v][*next];
                    *next += 1;
                    if index[w] == usize::MAX {
                        index[w] = counter;
                        low[w] = counter;
                        counter += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        work.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    work.pop();
                    if let Some(&(u, _)) = work.last() {
                        low[u] = low[u].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
        // Tarjan emits sinks first; order dependencies first with stable ties.
        let mut comp_of = vec![0; n];
        for (c, members) in comps.iter().enumerate() {
            for &m in members {
                comp_of[m] = c;
            }
        }
        let mut indeg = vec![0usize; comps.len()];
        let mut cadj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); comps.len()];
        for (v, outs) in adj.iter().enumerate() {
            for &w in outs {
                let (a, b) = (comp_of[v], comp_of[w]);
                if a != b && cadj[a].insert(b) {
                    indeg[b] += 1;
                }
            }
        }
        let key = |c: usize| comps[c][0];
        let mut ready: BTreeSet<(usize, usize)> =
            (0..comps.len()).filter(|&c| indeg[c] == 0).map(|c| (key(c), c)).collect();
        let mut order = Vec::new();
        while let Some(&(k, c)) = ready.iter().next() {
            ready.remove(&(k, c));
            order.push(c);
            for &d in &cadj[c] {
                indeg[d] -= 1;
                if indeg[d] == 0 {
                    ready.insert((key(d), d));
                }
            }
        }
        self.sccs = order.iter().map(|&c| comps[c].iter().map(|&i| self.nodes[i].clone()).collect()).collect();
        self.scc_of = HashMap::new();
        for (i, comp) in self.sccs.iter().enumerate() {
            for p in comp {
                self.scc_of.insert(p.clone(), i);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn ancestor_clique_with_negative_edge() {
        let p = parse_program(
            "delta_anc(0, marc).
             delta_anc(J+1, Y) <- delta_anc(J, X), parent(Y, X), ~all_anc(J, Y).
             all_anc(J+1, X) <- all_anc(J, X).
             all_anc(J, X) <- delta_anc(J, X).",
        )
        .unwrap();
        let g = build_graph(&p);
        assert_eq!(g.scc_of("delta_anc"), g.scc_of("all_anc"));
        assert!(g
            .edges
            .iter()
            .any(|e| &*e.from == "all_anc" && &*e.to == "delta_anc" && e.polarity == Polarity::Negative));
        assert!(g.scc_of("parent") < g.scc_of("all_anc"));
    }

    #[test]
    fn facts_only() {
        let g = build_graph(&parse_program("p(a). q(b).").unwrap());
        assert_eq!(g.nodes.len(), 2);
        assert!(g.edges.is_empty());
        assert_eq!(g.sccs.len(), 2);
    }

    #[test]
    fn monotone_aggregate_edge() {
        let p = parse_program(
            "willcome(P) <- sure(P).
             willcome(P) <- c_friends(P, K), K >= 3.
             c_friends(P, mcount<F>) <- willcome(F), friend(P, F).",
        )
        .unwrap();
        let g = build_graph(&p);
        assert_eq!(g.scc_of("willcome"), g.scc_of("c_friends"));
        assert!(g.edges.iter().any(|e| &*e.from == "willcome"
            && &*e.to == "c_friends"
            && e.polarity == Polarity::Aggregate { monotone: true }));
    }
}
