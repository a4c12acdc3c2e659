//! XY-stratified programs: classification of X- and Y-rules, the bistate
//! rewriting that drops the temporal argument, and the synchronized form
//! evaluated one step at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::graph::{build_graph_with, PredicateGraph};
use super::strata::{stratify_with, Stratification};
use crate::error::{Diagnostic, Error, Result};
use crate::lang::{
    temporal_argument, Atom, CmpOp, Expr, Head, HeadArg, Literal, Program, Rule, TemporalInfo, TemporalTerm, Term, Var,
};
use crate::uda::Registry;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum XyClass {
    /// Every recursive body atom shares the head's temporal term.
    X,
    /// The head is `J+1` and some recursive body atom is at `J`.
    Y,
    NotXy(String),
}

fn classify(r: &Rule, info: &TemporalInfo) -> XyClass {
    use TemporalTerm as T;
    let head = &info.head;
    if info.body.iter().all(|(_, t)| t == head) {
        return match head {
            T::Var(_, 1) => XyClass::NotXy(format!("rule for {}: head at J+1 without a recursive goal at J", r.head.pred)),
            T::Var(_, _) if info.body.is_empty() => {
                XyClass::NotXy(format!("rule for {}: temporal head variable without a recursive goal", r.head.pred))
            }
            T::Const(c) if *c != 0 => XyClass::NotXy(format!("rule for {}: exit rules must be at step 0", r.head.pred)),
            _ => XyClass::X,
        };
    }
    match head {
        T::Var(j, 1) => {
            let mut lagged = false;
            for (_, t) in &info.body {
                match t {
                    T::Var(v, 0) if v == j => lagged = true,
                    T::Var(v, 1) if v == j => {}
                    _ => {
                        return XyClass::NotXy(format!(
                            "rule for {}: recursive goals must use {} or {}+1",
                            r.head.pred,
                            j.name(),
                            j.name()
                        ))
                    }
                }
            }
            if lagged {
                XyClass::Y
            } else {
                XyClass::NotXy(format!("rule for {}: head at J+1 without a recursive goal at J", r.head.pred))
            }
        }
        _ => XyClass::NotXy(format!("rule for {}: recursive goals do not share the head's temporal argument", r.head.pred)),
    }
}

/// Classify each rule with head in `clique`.
pub fn xy_classify(rules: &[Rule], clique: &BTreeSet<Arc<str>>) -> Result<Vec<XyClass>> {
    let mut out = Vec::new();
    for r in rules {
        out.push(match temporal_argument(r, clique)? {
            Some(info) => classify(r, &info),
            None => XyClass::NotXy(format!("rule for {}: no temporal argument in position 1", r.head.pred)),
        });
    }
    Ok(out)
}

/// A rule of the bistate program together with its origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BistateRule {
    pub rule: Rule,
    /// Index into [`XyProgram::rules`].
    pub origin: usize,
    pub class: XyClass,
    pub head_temporal: TemporalTerm,
    /// Set for `new_q(X) <- old_q(X).`
    pub copy_of: Option<Arc<str>>,
    /// The temporal variable occurs outside temporal positions.
    pub uses_step: bool,
}

/// An XY-stratified component.
#[derive(Clone, Debug)]
pub struct XyProgram {
    /// Recursive predicates with a temporal first argument.
    pub preds: Vec<Arc<str>>,
    pub arity: BTreeMap<Arc<str>, usize>,
    pub rules: Vec<Rule>,
    pub bistate: Vec<BistateRule>,
    /// Strata of the bistate program.
    pub strata: Stratification,
}

pub fn new_name(p: &str) -> Arc<str> {
    Arc::from(format!("new_{p}"))
}

pub fn old_name(p: &str) -> Arc<str> {
    Arc::from(format!("old_{p}"))
}

fn temporal_var(info: &TemporalInfo) -> Option<Var> {
    match &info.head {
        TemporalTerm::Var(v, _) => Some(v.clone()),
        TemporalTerm::Const(_) => info.body.iter().find_map(|(_, t)| match t {
            TemporalTerm::Var(v, _) => Some(v.clone()),
            _ => None,
        }),
    }
}

fn strip(args: &[Term]) -> Vec<Term> {
    args[1..].to_vec()
}

fn bistate_rule(
    r: &Rule,
    origin: usize,
    class: XyClass,
    info: &TemporalInfo,
    members: &BTreeSet<Arc<str>>,
) -> BistateRule {
    let j = temporal_var(info);
    let head_args: Vec<HeadArg> = r.head.args[1..].to_vec();
    let mut body = Vec::new();
    let mut uses_step = false;
    let lagged_of = |i: usize| info.body.iter().find(|(k, _)| *k == i).map(|(_, t)| t != &info.head);
    for (i, l) in r.body.iter().enumerate() {
        match l {
            Literal::Atom { atom, negated } if members.contains(&atom.pred) => {
                let name = if lagged_of(i) == Some(true) { old_name(&atom.pred) } else { new_name(&atom.pred) };
                let rest = strip(&atom.args);
                if j.as_ref().is_some_and(|j| rest.iter().any(|t| t.vars().contains(j))) {
                    uses_step = true;
                }
                body.push(Literal::Atom { atom: Atom { pred: name, args: rest }, negated: *negated });
            }
            Literal::Choice { left, right } => {
                let keep = |vs: &[Var]| vs.iter().filter(|v| Some(*v) != j.as_ref()).cloned().collect::<Vec<_>>();
                body.push(Literal::Choice { left: keep(left), right: keep(right) });
            }
            other => {
                if j.as_ref().is_some_and(|j| other.vars().contains(j)) {
                    uses_step = true;
                }
                body.push(other.clone());
            }
        }
    }
    let head = Head { pred: new_name(&r.head.pred), args: head_args };
    if j.as_ref().is_some_and(|j| head.vars().contains(j)) {
        uses_step = true;
    }
    let rule = Rule { head, body, pos: r.pos };
    let copy_of = match rule.body.as_slice() {
        [Literal::Atom { atom, negated: false }]
            if *atom.pred == *old_name(&r.head.pred)
                && !rule.head.has_aggregates()
                && rule.head.as_atom().is_some_and(|h| h.args == atom.args) =>
        {
            Some(r.head.pred.clone())
        }
        _ => None,
    };
    BistateRule { rule, origin, class, head_temporal: info.head.clone(), copy_of, uses_step }
}

impl XyProgram {
    pub fn bistate_program(&self) -> Program {
        Program { rules: self.bistate.iter().map(|b| b.rule.clone()).collect(), ..Program::default() }
    }

    /// Bistate rules with the step counter goals, followed by one result rule
    /// per recursive predicate.
    pub fn syncbi_program(&self) -> Program {
        let mut rules: Vec<Rule> = self.bistate.iter().map(syncbi_rule).collect();
        for p in &self.preds {
            let n = self.arity[p];
            let vars: Vec<Term> = (1..n).map(|i| Term::var(&format!("X{i}"))).collect();
            let mut head = vec![Term::var("J")];
            head.extend(vars.iter().cloned());
            rules.push(Rule::new(
                Atom { pred: p.clone(), args: head },
                vec![Literal::pos(Atom { pred: new_name(p), args: vars }), Literal::pos(Atom::new("counter", vec![Term::var("J")]))],
            ));
        }
        Program { rules, ..Program::default() }
    }

    pub fn y_rules(&self) -> impl Iterator<Item = &BistateRule> {
        self.bistate.iter().filter(|b| b.class == XyClass::Y)
    }
}

/// The step-synchronized form of one bistate rule.
pub fn syncbi_rule(b: &BistateRule) -> Rule {
    let mut r = b.rule.clone();
    let counter = |t: Term| Literal::pos(Atom::new("counter", vec![t]));
    match &b.head_temporal {
        TemporalTerm::Const(c) => r.body.insert(0, counter(Term::int(*c as i64))),
        TemporalTerm::Var(j, off) if b.uses_step => {
            if *off == 0 {
                r.body.insert(0, counter(Term::Var(j.clone())));
            } else {
                let used: BTreeSet<Var> = r.vars().into_iter().collect();
                let mut t = Var::new("T");
                let mut k = 1;
                while used.contains(&t) {
                    t = Var::new(&format!("T{k}"));
                    k += 1;
                }
                r.body.insert(0, counter(Term::Var(t.clone())));
                r.body.insert(
                    1,
                    Literal::Compare {
                        op: CmpOp::Eq,
                        lhs: Expr::Term(Term::Var(j.clone())),
                        rhs: Expr::Bin(
                            crate::lang::ArithOp::Sub,
                            Box::new(Expr::Term(Term::Var(t))),
                            Box::new(Expr::Term(Term::int(1))),
                        ),
                    },
                );
            }
        }
        TemporalTerm::Var(..) => {}
    }
    r
}

/// True when some rule of the component uses a successor head.
pub fn has_successor_head(rules: &[&Rule]) -> bool {
    rules.iter().any(|r| matches!(r.head.args.first(), Some(HeadArg::Term(Term::Temporal(..)))))
}

/// Build and validate the XY program for `members`, given the indices of
/// their rules in `all`.
pub fn build_xy(
    all: &[Rule],
    rule_ids: &[usize],
    members: &BTreeSet<Arc<str>>,
    arity: &BTreeMap<Arc<str>, usize>,
    registry: &Registry,
) -> std::result::Result<XyProgram, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut bistate = Vec::new();
    let rules: Vec<Rule> = rule_ids.iter().map(|&i| all[i].clone()).collect();
    for (k, r) in rules.iter().enumerate() {
        let info = match temporal_argument(r, members) {
            Ok(Some(info)) => info,
            Ok(None) => {
                diags.push(Diagnostic::new(Some(r.pos), format!("not an XY rule: rule for {} has no temporal argument", r.head.pred)));
                continue;
            }
            Err(Error::Analysis(ds)) => {
                diags.extend(ds);
                continue;
            }
            Err(e) => {
                diags.push(Diagnostic::new(Some(r.pos), e.to_string()));
                continue;
            }
        };
        let class = classify(r, &info);
        if let XyClass::NotXy(msg) = &class {
            diags.push(Diagnostic::new(Some(r.pos), format!("not an XY rule: {msg}")));
        }
        let j = temporal_var(&info);
        if r.has_choice() {
            let ok = r.body.iter().any(|l| matches!(l, Literal::Choice { left, .. } if j.as_ref().is_some_and(|j| left.contains(j))));
            if !ok {
                diags.push(Diagnostic::new(
                    Some(r.pos),
                    format!("choice rule for {} in an XY program: some choice goal must have the temporal variable on its left", r.head.pred),
                ));
            }
        }
        let nonmonotone = r.head.args.iter().any(|a| match a {
            HeadArg::Aggregate { name, .. } => registry.get(name).is_none_or(|d| !d.is_monotone()),
            HeadArg::Term(_) => false,
        });
        if nonmonotone {
            let group: Vec<Var> = r
                .head
                .args
                .iter()
                .filter_map(|a| match a {
                    HeadArg::Term(t) => Some(t.vars()),
                    HeadArg::Aggregate { .. } => None,
                })
                .flatten()
                .collect();
            if !j.as_ref().is_some_and(|j| group.contains(j)) {
                diags.push(Diagnostic::new(
                    Some(r.pos),
                    format!(
                        "aggregate rule for {} in an XY program: the temporal variable{} must be a group-by argument",
                        r.head.pred,
                        j.as_ref().map(|j| format!(" {}", j.name())).unwrap_or_default()
                    ),
                ));
            }
        }
        bistate.push(bistate_rule(r, k, class, &info, members));
    }
    let preds: Vec<Arc<str>> = {
        let mut v: Vec<Arc<str>> = Vec::new();
        for r in &rules {
            if !v.contains(&r.head.pred) {
                v.push(r.head.pred.clone());
            }
        }
        v
    };
    let prog = Program { rules: bistate.iter().map(|b| b.rule.clone()).collect(), ..Program::default() };
    let strata = match stratify_with(&prog, registry) {
        Ok(s) => s,
        Err(Error::NotStratified { cycle }) => {
            diags.push(Diagnostic::new(None, format!("not XY-stratified: bistate cycle through {}", cycle.join(" -> "))));
            Stratification::default()
        }
        Err(e) => {
            diags.push(Diagnostic::new(None, e.to_string()));
            Stratification::default()
        }
    };
    if !diags.is_empty() {
        return Err(diags);
    }
    let arity = preds.iter().map(|p| (p.clone(), arity.get(p).copied().unwrap_or(0))).collect();
    Ok(XyProgram { preds, arity, rules, bistate, strata })
}

/// Recursive components that are meant as XY programs: those with a
/// successor head. Without one there can be no Y-rule.
pub fn xy_candidates(p: &Program, g: &PredicateGraph) -> Vec<usize> {
    let mut out = Vec::new();
    for (c, comp) in g.sccs.iter().enumerate() {
        if !comp.iter().any(|q| g.is_recursive(q)) {
            continue;
        }
        let rules: Vec<&Rule> = p.rules.iter().filter(|r| comp.contains(&r.head.pred)).collect();
        if has_successor_head(&rules) {
            out.push(c);
        }
    }
    out
}

/// Diagnostics for every XY candidate component of `p`.
pub fn validate_choice_and_agg_in_xy(p: &Program) -> Vec<Diagnostic> {
    let registry = match Registry::for_program(p) {
        Ok(r) => r,
        Err(e) => return vec![Diagnostic::new(None, e.to_string())],
    };
    let g = build_graph_with(p, &registry);
    let arity: BTreeMap<Arc<str>, usize> = match p.arities() {
        Ok(a) => a.into_iter().collect(),
        Err(e) => return vec![Diagnostic::new(None, e.to_string())],
    };
    let mut out = Vec::new();
    for c in xy_candidates(p, &g) {
        let members: BTreeSet<Arc<str>> = g.sccs[c].iter().cloned().collect();
        let ids: Vec<usize> = (0..p.rules.len()).filter(|&i| members.contains(&p.rules[i].head.pred)).collect();
        if let Err(d) = build_xy(&p.rules, &ids, &members, &arity, &registry) {
            out.extend(d);
        }
    }
    out
}

impl fmt::Display for BistateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, print_program};

    const ANC: &str = "
        delta_anc(0, marc) <- .
        delta_anc(J+1, Y) <- delta_anc(J, X), parent(Y, X), ~all_anc(J, Y).
        all_anc(J+1, X) <- all_anc(J, X).
        all_anc(J, X) <- delta_anc(J, X).";

    fn anc() -> (Program, XyProgram) {
        let p = parse_program(&ANC.replace(" <- .", ".")).unwrap();
        let mut rules = vec![Rule::new(p.facts[0].clone(), vec![])];
        rules.extend(p.rules.iter().cloned());
        let members: BTreeSet<Arc<str>> = ["delta_anc", "all_anc"].into_iter().map(Arc::from).collect();
        let arity = BTreeMap::from([(Arc::from("delta_anc"), 2), (Arc::from("all_anc"), 2)]);
        let xy = build_xy(&rules, &[0, 1, 2, 3], &members, &arity, &crate::uda::builtin_catalog()).unwrap();
        (p, xy)
    }

    #[test]
    fn bistate_of_ancestors() {
        let (_, xy) = anc();
        let expected = parse_program(
            "new_delta_anc(marc).
             new_delta_anc(Y) <- old_delta_anc(X), parent(Y, X), ~old_all_anc(Y).
             new_all_anc(X) <- old_all_anc(X).
             new_all_anc(X) <- new_delta_anc(X).",
        )
        .unwrap();
        let mut want = vec![Rule::new(expected.facts[0].clone(), vec![])];
        want.extend(expected.rules);
        assert_eq!(xy.bistate_program().rules, want);
        let classes: Vec<&XyClass> = xy.bistate.iter().map(|b| &b.class).collect();
        assert_eq!(classes, [&XyClass::X, &XyClass::Y, &XyClass::Y, &XyClass::X]);
        assert_eq!(xy.bistate[2].copy_of.as_deref(), Some("all_anc"));
        assert_eq!(xy.strata.to_string(), "S0 = {old_all_anc, old_delta_anc, parent}\nS1 = {new_delta_anc}\nS2 = {new_all_anc}\n");
    }

    #[test]
    fn syncbi_of_ancestors() {
        let (_, xy) = anc();
        let text = print_program(&xy.syncbi_program());
        assert!(text.contains("new_delta_anc(marc) <- counter(0)."), "{text}");
        assert!(text.contains("delta_anc(J, X1) <- new_delta_anc(X1), counter(J)."), "{text}");
        assert!(text.contains("all_anc(J, X1) <- new_all_anc(X1), counter(J)."), "{text}");
    }

    #[test]
    fn classification() {
        let p = parse_program(
            "a(J+1, X) <- a(J, X).
             a(J, X) <- b(J, X).
             b(J+1, X) <- b(J+1, X), a(J, X).
             b(J, X) <- a(K, X).",
        )
        .unwrap();
        let clique: BTreeSet<Arc<str>> = ["a", "b"].into_iter().map(Arc::from).collect();
        let c = xy_classify(&p.rules, &clique).unwrap();
        assert_eq!(c[0], XyClass::Y);
        assert_eq!(c[1], XyClass::X);
        assert_eq!(c[2], XyClass::Y);
        assert!(matches!(c[3], XyClass::NotXy(_)));
    }

    #[test]
    fn choice_needs_temporal_variable_on_the_left() {
        let p = parse_program(
            "p(0, a).
             p(J+1, Y) <- p(J, X), e(X, Y), ~q(J, Y), choice((X), (Y)).
             q(J, X) <- p(J, X).",
        )
        .unwrap();
        let with_facts = Program { rules: std::iter::once(Rule::new(p.facts[0].clone(), vec![])).chain(p.rules.clone()).collect(), ..Program::default() };
        let d = validate_choice_and_agg_in_xy(&with_facts);
        assert!(d.iter().any(|d| d.message.contains("choice goal")), "{d:?}");
    }
}
