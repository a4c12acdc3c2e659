//! Unfolding of predicates defined only by comparisons, such as
//! `distinct(F1, T1, F2, T2) <- T1 != T2.` These have no range-restricted
//! meaning on their own and are replaced by their bodies at each call site.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::Diagnostic;
use crate::lang::{HeadArg, Literal, Program, Rule, Term, Var};
use crate::uda;

/// Predicates every rule of which has a body of comparisons only.
pub fn comparison_predicates(p: &Program) -> BTreeSet<Arc<str>> {
    let with_facts: BTreeSet<&Arc<str>> = p.facts.iter().map(|f| &f.pred).collect();
    let mut out = BTreeSet::new();
    for pred in p.derived_preds() {
        if uda::is_reserved(&pred) || with_facts.contains(&pred) {
            continue;
        }
        let rules: Vec<&Rule> = p.rules.iter().filter(|r| r.head.pred == pred).collect();
        let eligible = rules.iter().all(|r| {
            !r.head.has_aggregates()
                && !r.body.is_empty()
                && r.body.iter().all(|l| matches!(l, Literal::Compare { .. }))
        });
        if eligible {
            out.insert(pred);
        }
    }
    out
}

type Subst = HashMap<Var, Term>;

fn walk(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => match s.get(v) {
            Some(b) => walk(b, s),
            None => t.clone(),
        },
        Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| walk(a, s)).collect()),
        _ => t.clone(),
    }
}

fn unify(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let (a, b) = (walk(a, s), walk(b, s));
    match (&a, &b) {
        _ if a == b => true,
        (Term::Var(v), other) | (other, Term::Var(v)) => {
            if other.vars().contains(v) {
                return false;
            }
            s.insert(v.clone(), other.clone());
            true
        }
        (Term::Compound(f, xs), Term::Compound(g, ys)) if f == g && xs.len() == ys.len() => {
            xs.iter().zip(ys).all(|(x, y)| unify(x, y, s))
        }
        _ => false,
    }
}

fn apply(r: &Rule, s: &Subst) -> Rule {
    let mut f = |v: &Var| walk(&Term::Var(v.clone()), s);
    Rule {
        head: crate::lang::Head {
            pred: r.head.pred.clone(),
            args: r
                .head
                .args
                .iter()
                .map(|a| match a {
                    HeadArg::Term(t) => HeadArg::Term(t.rename(&mut f)),
                    HeadArg::Aggregate { name, arg } => HeadArg::Aggregate { name: name.clone(), arg: arg.rename(&mut f) },
                })
                .collect(),
        },
        body: r.body.iter().map(|l| l.rename(&mut f)).collect(),
        pos: r.pos,
    }
}

/// Unfold every call to a comparison-only predicate. Negated calls cannot be
/// unfolded and are reported.
pub fn inline_comparison_predicates(p: &Program) -> Result<Program, Vec<Diagnostic>> {
    let targets = comparison_predicates(p);
    if targets.is_empty() {
        return Ok(p.clone());
    }
    let defs: HashMap<&str, Vec<&Rule>> = targets
        .iter()
        .map(|t| (&**t, p.rules.iter().filter(|r| &r.head.pred == t).collect()))
        .collect();
    let mut diags = Vec::new();
    let mut out = Program { rules: Vec::new(), schema: p.schema.clone(), facts: p.facts.clone() };
    let mut fresh = 0usize;
    for r in &p.rules {
        if targets.contains(&r.head.pred) {
            continue;
        }
        let mut work = vec![r.clone()];
        let mut done = Vec::new();
        while let Some(cur) = work.pop() {
            let call = cur.body.iter().position(|l| l.atom().is_some_and(|a| targets.contains(&a.pred)));
            let Some(i) = call else {
                done.push(cur);
                continue;
            };
            let Literal::Atom { atom, negated } = &cur.body[i] else { unreachable!() };
            if *negated {
                diags.push(Diagnostic::new(
                    Some(cur.pos),
                    format!("rule for {}: negated call to comparison predicate {} cannot be unfolded", cur.head.pred, atom.pred),
                ));
                continue;
            }
            let used: BTreeSet<Var> = cur.vars().into_iter().collect();
            for def in defs[&*atom.pred].iter().rev() {
                fresh += 1;
                let rename = |v: &Var| {
                    let mut k = fresh;
                    loop {
                        let nv = Var::new(&format!("{}_{k}", v.name().trim_start_matches("_#")));
                        if !used.contains(&nv) {
                            return Term::Var(nv);
                        }
                        k += 1;
                    }
                };
                let def = {
                    let renamed: HashMap<Var, Term> = def.vars().iter().map(|v| (v.clone(), rename(v))).collect();
                    apply(def, &renamed)
                };
                let mut s = Subst::new();
                let head_terms = def.head.args.iter().map(|a| match a {
                    HeadArg::Term(t) => t,
                    HeadArg::Aggregate { arg, .. } => arg,
                });
                if !head_terms.zip(&atom.args).all(|(h, c)| unify(h, c, &mut s)) {
                    continue;
                }
                let mut next = cur.clone();
                next.body.splice(i..=i, def.body.iter().cloned());
                work.push(apply(&next, &s));
            }
        }
        out.rules.extend(done);
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn select_larger_unfolds_into_two_rules() {
        let p = parse_program(
            "e(J, E, F, To) <- o(J, E, F, To1, F2, To2), select_larger(To1, To2, To).
             select_larger(X, Y, X) <- X >= Y.
             select_larger(X, Y, Y) <- Y > X.",
        )
        .unwrap();
        let out = inline_comparison_predicates(&p).unwrap();
        let expected = parse_program(
            "e(J, E, F, To) <- o(J, E, F, To, F2, To2), To >= To2.
             e(J, E, F, To) <- o(J, E, F, To1, F2, To), To > To1.",
        )
        .unwrap();
        assert_eq!(out.rules.len(), 2);
        assert_eq!(out.to_string_for_test(), expected.to_string_for_test());
    }

    #[test]
    fn negated_call_is_rejected() {
        let p = parse_program("p(X) <- q(X, Y), ~distinct(X, Y). distinct(A, B) <- A != B.").unwrap();
        let d = inline_comparison_predicates(&p).unwrap_err();
        assert!(d[0].message.contains("distinct"));
    }

    impl Program {
        fn to_string_for_test(&self) -> String {
            crate::lang::print_program(self)
        }
    }
}
