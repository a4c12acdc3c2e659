use std::collections::BTreeSet;

use crate::error::{Diagnostic, Error, Result};
use crate::lang::{Atom, CmpOp, Expr, Head, HeadArg, Literal, Program, Rule, Term, Var};
use crate::uda::{Monotonicity, Registry};

pub fn classify_aggregate(name: &str, registry: &Registry) -> Result<Monotonicity> {
    Ok(registry.lookup(name)?.monotonicity())
}

struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self, base: &str) -> Var {
        let mut name = base.to_string();
        let mut k = 1;
        while self.used.contains(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        self.used.insert(name.clone());
        Var::new(&name)
    }
}

fn vt(v: &Var) -> Term {
    Term::Var(v.clone())
}

fn atom(pred: &str, prefix: &[Var], rest: Vec<Term>) -> Atom {
    Atom::new(pred, prefix.iter().map(vt).chain(rest).collect())
}

fn nil() -> Term {
    Term::sym("nil")
}

/// Rewrite every aggregate rule into the chain/cagr/results form built from
/// choice and the reserved single/multi/ereturn/freturn predicates.
pub fn expand_aggregates(p: &Program, registry: &Registry) -> Result<Program> {
    let mut out = Program { rules: Vec::new(), schema: p.schema.clone(), facts: p.facts.clone() };
    let mut count = std::collections::HashMap::<String, usize>::new();
    for r in &p.rules {
        if !r.head.has_aggregates() {
            out.rules.push(r.clone());
            continue;
        }
        let n = count.entry(r.head.pred.to_string()).or_default();
        *n += 1;
        let suffix = if *n == 1 { r.head.pred.to_string() } else { format!("{}_{n}", r.head.pred) };
        out.rules.extend(expand_rule(r, &suffix, registry)?);
    }
    Ok(out)
}

fn expand_rule(r: &Rule, suffix: &str, registry: &Registry) -> Result<Vec<Rule>> {
    let aggs: Vec<(usize, &str, &Term)> = r
        .head
        .args
        .iter()
        .enumerate()
        .filter_map(|(i, a)| match a {
            HeadArg::Aggregate { name, arg } => Some((i, &**name, arg)),
            HeadArg::Term(_) => None,
        })
        .collect();
    if aggs.len() != 1 {
        return Err(Error::Analysis(vec![Diagnostic::new(
            Some(r.pos),
            format!("rule for {}: expansion supports one aggregate per head", r.head.pred),
        )]));
    }
    let (agg_pos, agg, arg) = aggs[0];
    let def = registry.lookup(agg)?;

    let mut names = Names { used: r.vars().iter().map(|v| v.name().to_string()).collect() };
    let mut group: Vec<Var> = Vec::new();
    for (i, a) in r.head.args.iter().enumerate() {
        if let HeadArg::Term(t) = a {
            if i != agg_pos {
                for v in t.vars() {
                    if !group.contains(&v) {
                        group.push(v);
                    }
                }
            }
        }
    }
    let elems: Vec<Var> = r.body_vars().into_iter().filter(|v| !group.contains(v)).collect();
    let (elem_p, chain_p, cagr_p, results_p) =
        (format!("elem_{suffix}"), format!("chain_{suffix}"), format!("cagr_{suffix}"), format!("results_{suffix}"));
    let (x, y, y1, y2, old, new, yield_) = (
        names.fresh("X"),
        names.fresh("Y"),
        names.fresh("Y1"),
        names.fresh("Y2"),
        names.fresh("Old"),
        names.fresh("New"),
        names.fresh("Yield"),
    );
    let anon = |names: &mut Names| Term::Var(names.fresh("_#e"));
    let tuple = Term::Compound("".into(), elems.iter().map(vt).collect());
    let unpack = |v: &Var| -> Vec<Literal> {
        if elems.len() == 1 {
            vec![Literal::compare(CmpOp::Eq, vt(v), vt(&elems[0]))]
        } else {
            vec![Literal::compare(CmpOp::Eq, vt(v), tuple.clone())]
        }
    };
    let call = |pred: &str, mut args: Vec<Term>| {
        args.insert(0, Term::sym(agg));
        Literal::pos(Atom::new(pred, args))
    };
    let rule = |head: Atom, body: Vec<Literal>| Rule { head: Head::from_atom(head), body, pos: r.pos };

    let mut out = Vec::new();
    let mut elem_body = r.body.clone();
    let elem_term = if elems.len() == 1 {
        vt(&elems[0])
    } else {
        elem_body.push(Literal::compare(CmpOp::Eq, vt(&y), tuple.clone()));
        vt(&y)
    };
    out.push(rule(atom(&elem_p, &group, vec![elem_term]), elem_body));
    let a = anon(&mut names);
    out.push(rule(atom(&chain_p, &group, vec![nil(), nil()]), vec![Literal::pos(atom(&elem_p, &group, vec![a]))]));
    let a = anon(&mut names);
    let mut left1 = group.clone();
    left1.push(x.clone());
    let mut left2 = group.clone();
    left2.push(y.clone());
    out.push(rule(
        atom(&chain_p, &group, vec![vt(&x), vt(&y)]),
        vec![
            Literal::pos(atom(&chain_p, &group, vec![a, vt(&x)])),
            Literal::pos(atom(&elem_p, &group, vec![vt(&y)])),
            Literal::Choice { left: left1, right: vec![y.clone()] },
            Literal::Choice { left: left2, right: vec![x.clone()] },
        ],
    ));
    let first = || {
        vec![
            Literal::pos(atom(&chain_p, &group, vec![nil(), vt(&y)])),
            Literal::Compare { op: CmpOp::Ne, lhs: Expr::Term(vt(&y)), rhs: Expr::Term(nil()) },
        ]
    };
    let mut b = first();
    b.extend(unpack(&y));
    b.push(call("single", vec![arg.clone(), vt(&new)]));
    out.push(rule(atom(&cagr_p, &group, vec![vt(&y), vt(&new)]), b));

    let step = || {
        vec![
            Literal::pos(atom(&chain_p, &group, vec![vt(&y1), vt(&y2)])),
            Literal::pos(atom(&cagr_p, &group, vec![vt(&y1), vt(&old)])),
        ]
    };
    let mut b = step();
    b.extend(unpack(&y2));
    b.push(call("multi", vec![arg.clone(), vt(&old), vt(&new)]));
    out.push(rule(atom(&cagr_p, &group, vec![vt(&y2), vt(&new)]), b));

    let mut b = first();
    b.extend(unpack(&y));
    b.push(call("ereturn", vec![arg.clone(), nil(), vt(&yield_)]));
    out.push(rule(atom(&results_p, &group, vec![vt(&yield_)]), b));

    let mut b = step();
    b.extend(unpack(&y2));
    b.push(call("ereturn", vec![arg.clone(), vt(&old), vt(&yield_)]));
    out.push(rule(atom(&results_p, &group, vec![vt(&yield_)]), b));

    if !def.is_monotone() {
        let a = anon(&mut names);
        let mut b = vec![
            Literal::pos(atom(&chain_p, &group, vec![vt(&x), vt(&y)])),
            Literal::neg(atom(&chain_p, &group, vec![vt(&y), a])),
            Literal::pos(atom(&cagr_p, &group, vec![vt(&y), vt(&old)])),
        ];
        b.extend(unpack(&y));
        b.push(call("freturn", vec![arg.clone(), vt(&old), vt(&yield_)]));
        out.push(rule(atom(&results_p, &group, vec![vt(&yield_)]), b));
    }

    let head_args: Vec<Term> = r
        .head
        .args
        .iter()
        .map(|a| match a {
            HeadArg::Term(t) => t.clone(),
            HeadArg::Aggregate { .. } => vt(&yield_),
        })
        .collect();
    out.push(rule(Atom { pred: r.head.pred.clone(), args: head_args }, vec![Literal::pos(atom(&results_p, &group, vec![vt(&yield_)]))]));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::uda::builtin_catalog;

    #[test]
    fn classification() {
        let reg = builtin_catalog();
        assert_eq!(classify_aggregate("mcount", &reg).unwrap(), Monotonicity::Monotone);
        assert_eq!(classify_aggregate("avg", &reg).unwrap(), Monotonicity::Nonmonotone);
        assert!(matches!(classify_aggregate("nosuch", &reg), Err(Error::UnknownAggregate(_))));
    }

    #[test]
    fn one_negated_chain_goal_per_nonmonotone_aggregate() {
        let reg = builtin_catalog();
        let p = parse_program("a(avg<X>) <- d(X). m(mcount<X>) <- d(X).").unwrap();
        let x = expand_aggregates(&p, &reg).unwrap();
        let negs = |chain: &str| {
            x.rules
                .iter()
                .flat_map(|r| &r.body)
                .filter(|l| matches!(l, Literal::Atom { atom, negated: true } if &*atom.pred == chain))
                .count()
        };
        assert_eq!(negs("chain_a"), 1);
        assert_eq!(negs("chain_m"), 0);
        assert!(x.rules.iter().all(|r| !r.head.has_aggregates()));
    }
}
