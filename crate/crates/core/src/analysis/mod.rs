//! Static analysis: dependency graph, safety, stratification, the
//! first-order reading of choice, aggregate expansion and XY programs.

mod aggregates;
mod explain;
mod foe;
mod graph;
mod inline;
mod safety;
mod strata;
mod xy;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub use aggregates::{classify_aggregate, expand_aggregates};
pub use explain::{explain_bistate, explain_foe, explain_strata, explain_syncbi};
pub use foe::foe_transform;
pub use graph::{build_graph, build_graph_with, Edge, Polarity, PredicateGraph};
pub use inline::{comparison_predicates, inline_comparison_predicates};
pub use safety::{bound_vars, check_rule_safety, check_safety, literal_effect};
pub use strata::{layer, stratify, stratify_with, Stratification};
pub use xy::{
    build_xy, new_name, old_name, syncbi_rule, validate_choice_and_agg_in_xy, xy_candidates, xy_classify,
    BistateRule, XyClass, XyProgram,
};

use crate::error::{Diagnostic, Error, Result};
use crate::lang::{temporal_argument, Atom, HeadArg, Literal, Program, Rule, SchemaDecl, Term, Var};
use crate::uda::{self, Registry};

#[derive(Clone, Debug)]
pub enum ComponentKind {
    /// Ordinary rules evaluated to a fixpoint; `recursive` when some rule
    /// depends on the component itself.
    Rules { recursive: bool },
    Xy(Box<XyProgram>),
}

/// A unit of bottom-up evaluation.
#[derive(Clone, Debug)]
pub struct Component {
    pub preds: Vec<Arc<str>>,
    /// Indices into [`Analysis::program`]'s rules.
    pub rules: Vec<usize>,
    pub kind: ComponentKind,
}

impl Component {
    pub fn xy(&self) -> Option<&XyProgram> {
        match &self.kind {
            ComponentKind::Xy(x) => Some(x),
            ComponentKind::Rules { .. } => None,
        }
    }
}

/// A checked program ready for evaluation.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// Ordinary rules after unfolding; facts of derived predicates appear as
    /// bodiless rules.
    pub program: Program,
    pub registry: Registry,
    /// Facts of base predicates.
    pub base_facts: Vec<Atom>,
    pub schema: Vec<SchemaDecl>,
    pub arity: BTreeMap<Arc<str>, usize>,
    pub graph: PredicateGraph,
    pub strata: Stratification,
    /// Components in evaluation order.
    pub components: Vec<Component>,
}

impl Analysis {
    pub fn component_of(&self, pred: &str) -> Option<usize> {
        self.components.iter().position(|c| c.preds.iter().any(|p| &**p == pred))
    }

    pub fn xy_of(&self, pred: &str) -> Option<&XyProgram> {
        self.components.iter().find_map(|c| c.xy().filter(|x| x.preds.iter().any(|p| &**p == pred)))
    }

    pub fn rules_for<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.program.rules.iter().filter(move |r| &*r.head.pred == pred)
    }

    pub fn is_derived(&self, pred: &str) -> bool {
        self.component_of(pred).is_some()
    }
}

/// Variables that occur only inside one negated goal are existential within
/// the negation; make them anonymous.
pub fn localize_negation(r: &Rule) -> Rule {
    let mut out = r.clone();
    let mut k = 0;
    for i in 0..r.body.len() {
        let Literal::Atom { negated: true, .. } = &r.body[i] else { continue };
        let elsewhere: BTreeSet<Var> = r
            .head
            .vars()
            .into_iter()
            .chain(r.body.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, l)| l.vars()))
            .collect();
        let local: Vec<Var> = r.body[i].vars().into_iter().filter(|v| !v.is_anonymous() && !elsewhere.contains(v)).collect();
        if local.is_empty() {
            continue;
        }
        let renamed: Vec<(Var, Var)> = local
            .into_iter()
            .map(|v| {
                k += 1;
                (v, Var::new(&format!("_#n{k}")))
            })
            .collect();
        out.body[i] = r.body[i].rename(&mut |v| match renamed.iter().find(|(a, _)| a == v) {
            Some((_, b)) => Term::Var(b.clone()),
            None => Term::Var(v.clone()),
        });
    }
    out
}

/// Move facts of predicates that also have rules into bodiless rules placed
/// before the other rules, and drop aggregate definition rules.
pub fn prepare(p: &Program) -> (Program, Vec<Atom>) {
    let rules: Vec<Rule> = p.rules.iter().filter(|r| uda::definition_target(r).is_none()).map(localize_negation).collect();
    let derived: BTreeSet<Arc<str>> = rules.iter().map(|r| r.head.pred.clone()).collect();
    let (derived_facts, base): (Vec<Atom>, Vec<Atom>) = p.facts.iter().cloned().partition(|f| derived.contains(&f.pred));
    let mut all: Vec<Rule> = derived_facts.into_iter().map(|f| Rule::new(f, Vec::new())).collect();
    all.extend(rules);
    (Program { rules: all, schema: p.schema.clone(), facts: Vec::new() }, base)
}

fn check_aggregates(p: &Program, registry: &Registry) -> Result<()> {
    for r in &p.rules {
        for a in &r.head.args {
            if let HeadArg::Aggregate { name, .. } = a {
                registry.lookup(name)?;
            }
        }
    }
    Ok(())
}

pub fn analyze(source: &Program) -> Result<Analysis> {
    let registry = Registry::for_program(source)?;
    let (prepared, base_facts) = prepare(source);
    check_aggregates(&prepared, &registry)?;
    let program = inline_comparison_predicates(&prepared).map_err(Error::Analysis)?;
    let mut with_facts = program.clone();
    with_facts.facts = base_facts.clone();
    let arity: BTreeMap<Arc<str>, usize> = with_facts.arities()?.into_iter().collect();
    let unsafe_rules = check_safety(&program);
    if !unsafe_rules.is_empty() {
        return Err(Error::Analysis(unsafe_rules));
    }
    let graph = build_graph_with(&with_facts, &registry);

    // XY programs: candidate components plus dependent temporal predicates.
    let mut xy_units: Vec<(BTreeSet<usize>, XyProgram)> = Vec::new();
    let mut diags: Vec<Diagnostic> = Vec::new();
    for c in xy_candidates(&program, &graph) {
        let mut members: BTreeSet<Arc<str>> = graph.sccs[c].iter().cloned().collect();
        let mut comps = BTreeSet::from([c]);
        for (d, comp) in graph.sccs.iter().enumerate().skip(c + 1) {
            if comp.len() != 1 || graph.is_recursive(&comp[0]) {
                continue;
            }
            let q = &comp[0];
            let rules: Vec<&Rule> = program.rules.iter().filter(|r| &r.head.pred == q).collect();
            if rules.is_empty() {
                continue;
            }
            let mut trial = members.clone();
            trial.insert(q.clone());
            let fits = rules.iter().all(|r| {
                let reads_member = r.body_preds().any(|b| members.contains(b));
                let lower = r.body_preds().all(|b| members.contains(b) || graph.scc_of(b).is_some_and(|s| s < c));
                let temporal = matches!(temporal_argument(r, &trial), Ok(Some(_)));
                let ok_class = matches!(xy_classify(&[(*r).clone()], &trial).map(|v| v[0].clone()), Ok(XyClass::X | XyClass::Y));
                reads_member && lower && temporal && ok_class
            });
            if fits {
                members = trial;
                comps.insert(d);
            }
        }
        let ids: Vec<usize> = (0..program.rules.len()).filter(|&i| members.contains(&program.rules[i].head.pred)).collect();
        match build_xy(&program.rules, &ids, &members, &arity, &registry) {
            Ok(x) => xy_units.push((comps, x)),
            Err(d) => diags.extend(d),
        }
    }
    if !diags.is_empty() {
        return Err(Error::Analysis(diags));
    }
    let in_xy = |c: usize| xy_units.iter().any(|(cs, _)| cs.contains(&c));
    strata::check_strict_edges(&graph, in_xy)?;

    let mut unit: Vec<usize> = (0..graph.sccs.len()).collect();
    for (cs, _) in &xy_units {
        let first = *cs.iter().next().expect("nonempty");
        for &c in cs {
            unit[c] = first;
        }
    }
    let strata = layer(&graph, &unit);

    let mut components = Vec::new();
    let mut emitted = BTreeSet::new();
    for (c, comp) in graph.sccs.iter().enumerate() {
        if let Some((cs, x)) = xy_units.iter().find(|(cs, _)| cs.contains(&c)) {
            if emitted.insert(*cs.iter().next().expect("nonempty")) {
                let rules: Vec<usize> =
                    (0..program.rules.len()).filter(|&i| x.preds.contains(&program.rules[i].head.pred)).collect();
                components.push(Component { preds: x.preds.clone(), rules, kind: ComponentKind::Xy(Box::new(x.clone())) });
            }
            continue;
        }
        let rules: Vec<usize> = (0..program.rules.len()).filter(|&i| comp.contains(&program.rules[i].head.pred)).collect();
        if rules.is_empty() {
            continue;
        }
        let recursive = comp.iter().any(|p| graph.is_recursive(p));
        components.push(Component { preds: comp.clone(), rules, kind: ComponentKind::Rules { recursive } });
    }
    Ok(Analysis {
        program,
        registry,
        base_facts,
        schema: source.schema.clone(),
        arity,
        graph,
        strata,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn ancestors_become_one_xy_component() {
        let p = parse_program(
            "parent(anna, marc). parent(zoe, anna).
             delta_anc(0, marc).
             delta_anc(J+1, Y) <- delta_anc(J, X), parent(Y, X), ~all_anc(J, Y).
             all_anc(J+1, X) <- all_anc(J, X).
             all_anc(J, X) <- delta_anc(J, X).",
        )
        .unwrap();
        let a = analyze(&p).unwrap();
        assert_eq!(a.components.len(), 1);
        let x = a.components[0].xy().unwrap();
        assert_eq!(x.bistate.len(), 4);
        assert_eq!(a.base_facts.len(), 2);
    }

    #[test]
    fn coalescing_extends_xy_program() {
        let p = parse_program(
            "e_hist(0, Eno, Frm, To) <- emp(Eno, Frm, To).
             overlap(J+1, Eno, Frm1, To1, Frm2, To2) <- e_hist(J, Eno, Frm1, To1), e_hist(J, Eno, Frm2, To2),
                 Frm1 <= Frm2, Frm2 <= To1, distinct(Frm1, To1, Frm2, To2).
             e_hist(J, Eno, Frm1, To) <- overlap(J, Eno, Frm1, To1, Frm2, To2), select_larger(To1, To2, To).
             final_e_hist(J+1, Eno, Frm, To) <- e_hist(J, Eno, Frm, To), ~overlap(J+1, Eno, Frm, To, _, _),
                 ~overlap(J+1, Eno, _, _, Frm, To).
             coalesced(Eno, Frm, To) <- final_e_hist(_, Eno, Frm, To).
             distinct(F1, T1, F2, T2) <- T1 != T2.
             distinct(F1, T1, F2, T2) <- F1 != F2.
             select_larger(X, Y, X) <- X >= Y.
             select_larger(X, Y, Y) <- Y > X.",
        )
        .unwrap();
        let a = analyze(&p).unwrap();
        let x = a.xy_of("final_e_hist").expect("member");
        assert!(x.preds.iter().any(|p| &**p == "e_hist"));
        assert!(a.xy_of("coalesced").is_none());
        assert!(a.component_of("coalesced") > a.component_of("e_hist"));
    }

    #[test]
    fn unstratified_program_is_rejected() {
        let p = parse_program("p(X) <- q(X), ~p(X).").unwrap();
        assert!(matches!(analyze(&p), Err(Error::NotStratified { .. })));
    }

    #[test]
    fn offset_two_is_not_xy() {
        let p = parse_program("a(0, x). a(J+2, X) <- a(J, X), ~b(J, X). b(J, X) <- a(J, X).").unwrap();
        match analyze(&p) {
            Err(Error::Analysis(d)) => assert!(d.iter().any(|d| d.message.contains("not an XY rule"))),
            other => panic!("{other:?}"),
        }
    }
}
