use std::collections::BTreeSet;

use crate::error::Diagnostic;
use crate::lang::{CmpOp, Expr, Literal, Program, Rule, Var};
use crate::uda;

fn all_bound(vars: &[Var], bound: &BTreeSet<Var>) -> bool {
    vars.iter().all(|v| bound.contains(v))
}

/// Whether a literal can run once `bound` holds, and which variables it binds.
///
/// Used both by the safety check and by body ordering.
pub fn literal_effect(l: &Literal, bound: &BTreeSet<Var>) -> Option<Vec<Var>> {
    match l {
        Literal::Atom { atom, negated: false } if uda::is_reserved(&atom.pred) => {
            let (out, inputs) = atom.args.split_last()?;
            let mut ins = Vec::new();
            for a in inputs {
                a.collect_vars(&mut ins);
            }
            all_bound(&ins, bound).then(|| out.vars())
        }
        Literal::Atom { atom, negated: false } => Some(atom.vars()),
        Literal::Atom { atom, negated: true } => {
            let named: Vec<Var> = atom.vars().into_iter().filter(|v| !v.is_anonymous()).collect();
            all_bound(&named, bound).then(Vec::new)
        }
        Literal::Compare { op, lhs, rhs } => {
            let (mut lv, mut rv) = (Vec::new(), Vec::new());
            lhs.collect_vars(&mut lv);
            rhs.collect_vars(&mut rv);
            if all_bound(&lv, bound) && all_bound(&rv, bound) {
                return Some(Vec::new());
            }
            if *op != CmpOp::Eq {
                return None;
            }
            let pattern = |e: &Expr| matches!(e, Expr::Term(_));
            if pattern(lhs) && all_bound(&rv, bound) {
                Some(lv)
            } else if pattern(rhs) && all_bound(&lv, bound) {
                Some(rv)
            } else {
                None
            }
        }
        Literal::Choice { .. } => Some(Vec::new()),
    }
}

/// Variables bound by the body, iterating assignments to a fixpoint.
pub fn bound_vars(body: &[Literal]) -> BTreeSet<Var> {
    let mut bound = BTreeSet::new();
    let mut done = vec![false; body.len()];
    loop {
        let mut changed = false;
        for (i, l) in body.iter().enumerate() {
            if done[i] || matches!(l, Literal::Atom { negated: true, .. }) {
                continue;
            }
            if let Some(vs) = literal_effect(l, &bound) {
                done[i] = true;
                changed = true;
                bound.extend(vs);
            }
        }
        if !changed {
            return bound;
        }
    }
}

pub fn check_rule_safety(r: &Rule) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut reported = BTreeSet::new();
    let bound = bound_vars(&r.body);
    let mut report = |v: &Var, what: &str| {
        if !reported.insert(v.clone()) {
            return;
        }
        let name = if v.is_anonymous() { "_" } else { v.name() };
        out.push(Diagnostic::new(
            Some(r.pos),
            format!("unsafe rule for {}: variable {name} in {what} is not bound by a positive goal", r.head.pred),
        ));
    };
    for v in r.head.vars() {
        if !bound.contains(&v) {
            report(&v, "the head");
        }
    }
    let atom_vars: BTreeSet<Var> =
        r.body.iter().filter_map(|l| l.positive_atom()).filter(|a| !uda::is_reserved(&a.pred)).flat_map(|a| a.vars()).collect();
    for l in &r.body {
        match l {
            Literal::Atom { atom, negated: true } => {
                for v in atom.vars() {
                    if !v.is_anonymous() && !bound.contains(&v) {
                        report(&v, &format!("negated goal {}", atom.pred));
                    }
                }
            }
            Literal::Compare { .. } => {
                for v in l.vars() {
                    if !bound.contains(&v) {
                        report(&v, "a comparison");
                    }
                }
            }
            Literal::Choice { .. } => {
                for v in l.vars() {
                    if !atom_vars.contains(&v) {
                        report(&v, "a choice goal");
                    }
                }
            }
            Literal::Atom { atom, negated: false } if uda::is_reserved(&atom.pred) => {
                for v in atom.vars() {
                    if !bound.contains(&v) {
                        report(&v, &format!("goal {}", atom.pred));
                    }
                }
            }
            Literal::Atom { .. } => {}
        }
    }
    out
}

/// Range-restriction check over every ordinary rule of `p`.
pub fn check_safety(p: &Program) -> Vec<Diagnostic> {
    p.rules.iter().filter(|r| uda::definition_target(r).is_none()).flat_map(check_rule_safety).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn unbound_head_variable() {
        let p = parse_program("p(X, Y) <- q(X).").unwrap();
        let d = check_safety(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("variable Y"), "{}", d[0].message);
        assert!(d[0].message.contains("rule for p"));
    }

    #[test]
    fn assignment_binds() {
        let p = parse_program(
            "mcount(Y, J1) <- mcount(X, J), chain(X, Y), J1 = J + 1.
             all(J, X, Z, C) <- d(X, Y, C1), e(Y, Z, C2), C = C1 + C2, J = 0.
             anc(Y) <- parent(Y, X), ~all_anc(Y, _).",
        )
        .unwrap();
        assert!(check_safety(&p).is_empty(), "{:?}", check_safety(&p));
    }

    #[test]
    fn negation_and_comparison_need_bindings() {
        let p = parse_program("p(X) <- q(X), ~r(X, Y). s(X) <- q(X), Z > 3.").unwrap();
        let d = check_safety(&p);
        assert_eq!(d.len(), 2, "{d:?}");
        assert!(d[0].message.contains("variable Y") && d[0].message.contains("negated goal r"));
        assert!(d[1].message.contains("variable Z"));
    }

    #[test]
    fn facts_and_aggregate_definitions_are_skipped() {
        let p = parse_program("p(a). freturn(myagg, _, S, S).").unwrap();
        assert!(check_safety(&p).is_empty());
    }
}
