use std::collections::BTreeSet;

use crate::lang::{Atom, CmpOp, Expr, Literal, Program, Rule, Term, Var};

/// Rewrite every choice rule into its first-order equivalent: the original
/// head is computed from `chosen_i`, which is defined by the body and the
/// negation of `diffChoice_i`. Names lose the suffix when the program has a
/// single choice rule.
pub fn foe_transform(p: &Program) -> Program {
    let n_choice = p.rules.iter().filter(|r| r.has_choice()).count();
    let mut out = Program { rules: Vec::new(), schema: p.schema.clone(), facts: p.facts.clone() };
    let mut k = 0;
    for r in &p.rules {
        if !r.has_choice() {
            out.rules.push(r.clone());
            continue;
        }
        k += 1;
        let (chosen, diff) = if n_choice == 1 {
            ("chosen".to_string(), "diffChoice".to_string())
        } else {
            (format!("chosen_{k}"), format!("diffChoice_{k}"))
        };
        out.rules.extend(foe_rule(r, &chosen, &diff));
    }
    out
}

fn foe_rule(r: &Rule, chosen: &str, diff: &str) -> Vec<Rule> {
    let goals: Vec<(&[Var], &[Var])> = r
        .body
        .iter()
        .filter_map(|l| match l {
            Literal::Choice { left, right } => Some((left.as_slice(), right.as_slice())),
            _ => None,
        })
        .collect();
    let mut w: Vec<Var> = Vec::new();
    for (x, y) in &goals {
        for v in x.iter().chain(y.iter()) {
            if !w.contains(v) {
                w.push(v.clone());
            }
        }
    }
    let w_terms = |f: &dyn Fn(&Var) -> Var| Atom::new(chosen, w.iter().map(|v| Term::Var(f(v))).collect());
    let body: Vec<Literal> = r.body.iter().filter(|l| !matches!(l, Literal::Choice { .. })).cloned().collect();

    let mut original = r.clone();
    original.body = body.clone();
    original.body.push(Literal::pos(w_terms(&|v| v.clone())));

    let mut chosen_rule = Rule::new(w_terms(&|v| v.clone()), body);
    chosen_rule.pos = r.pos;
    chosen_rule.body.push(Literal::neg(Atom::new(diff, w.iter().map(|v| Term::Var(v.clone())).collect())));

    let used: BTreeSet<String> = r.vars().iter().map(|v| v.name().to_string()).collect();
    let prime = |v: &Var| {
        let mut name = format!("{}'", v.name());
        while used.contains(&name) {
            name.push('\'');
        }
        Var::new(&name)
    };
    let mut out = vec![original, chosen_rule];
    for (x, y) in &goals {
        let primed = |v: &Var| if x.contains(v) { v.clone() } else { prime(v) };
        for yv in y.iter() {
            let mut d = Rule::new(
                Atom::new(diff, w.iter().map(|v| Term::Var(v.clone())).collect()),
                vec![
                    Literal::pos(w_terms(&primed)),
                    Literal::Compare {
                        op: CmpOp::Ne,
                        lhs: Expr::Term(Term::Var(yv.clone())),
                        rhs: Expr::Term(Term::Var(primed(yv))),
                    },
                ],
            );
            d.pos = r.pos;
            out.push(d);
        }
    }
    out
}
