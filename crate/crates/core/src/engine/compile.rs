//! Rules compiled to slot form with an evaluation order for their goals.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::analysis::literal_effect;
use crate::error::{Diagnostic, Error, Result};
use crate::lang::{ArithOp, CmpOp, Expr, HeadArg, Literal, Rule, Term, Var};
use crate::store::Pat;
use crate::uda::{self, AggregateDef, Registry};
use crate::value::{Compound, Value};

pub type Slot = u32;

#[derive(Clone, Debug, PartialEq)]
pub enum CTerm {
    Slot(Slot),
    Const(Value),
    Compound(Arc<str>, Vec<CTerm>),
    /// `J+k` over the slot of `J`.
    Succ(Slot, u8),
    /// Anonymous variable of a negated goal.
    Any,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CExpr {
    Term(CTerm),
    Neg(Box<CExpr>),
    Bin(ArithOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuncKind {
    Single,
    Multi,
    Ereturn,
    Freturn,
}

#[derive(Clone, Debug)]
pub enum Goal {
    Atom { pred: Arc<str>, args: Vec<CTerm> },
    Not { pred: Arc<str>, args: Vec<CTerm> },
    Cmp { op: CmpOp, lhs: CExpr, rhs: CExpr },
    /// A call to single/multi/ereturn/freturn of a registered aggregate.
    Func { kind: FuncKind, def: Arc<AggregateDef>, inputs: Vec<CTerm>, out: CTerm },
}

#[derive(Clone, Debug)]
pub enum CHead {
    Term(CTerm),
    Agg { def: Arc<AggregateDef>, arg: CTerm },
}

#[derive(Clone, Debug)]
pub struct ChoiceSpec {
    /// Slots of W, the variables of all choice goals.
    pub w: Vec<Slot>,
    /// Left and right positions within W of each goal.
    pub goals: Vec<(Vec<usize>, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct CRule {
    pub rule: Rule,
    pub head_pred: Arc<str>,
    pub head: Vec<CHead>,
    pub goals: Vec<Goal>,
    /// Source text of each goal, for traces.
    pub goal_text: Vec<String>,
    pub choice: Option<ChoiceSpec>,
    pub nslots: usize,
    pub names: Vec<Var>,
    /// Every body variable: an aggregate element is the binding of these.
    pub body_slots: Vec<Slot>,
    /// Slots each goal binds first.
    pub produces: Vec<Vec<Slot>>,
    /// Already bound slots each goal reads.
    pub consumes: Vec<Vec<Slot>>,
}

impl CRule {
    pub fn has_aggregates(&self) -> bool {
        self.head.iter().any(|h| matches!(h, CHead::Agg { .. }))
    }

    pub fn is_monotone(&self) -> bool {
        self.head.iter().all(|h| match h {
            CHead::Agg { def, .. } => def.is_monotone(),
            CHead::Term(_) => true,
        })
    }

    /// Indices of positive atom goals over `preds`.
    pub fn goals_over(&self, preds: &BTreeSet<Arc<str>>) -> Vec<usize> {
        self.goals
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g, Goal::Atom { pred, .. } if preds.contains(pred)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Order the body: positive atoms keep their textual order, other literals
/// run as soon as their inputs are bound, choice goals are dropped.
pub fn order_body(r: &Rule, prebound: &BTreeSet<Var>) -> Result<Vec<Literal>> {
    let mut bound = prebound.clone();
    let mut out = Vec::new();
    let mut pending: Vec<&Literal> = Vec::new();
    let flush = |bound: &mut BTreeSet<Var>, pending: &mut Vec<&Literal>, out: &mut Vec<Literal>| loop {
        let ready = pending.iter().position(|l| literal_effect(l, bound).is_some());
        match ready {
            Some(i) => {
                let l = pending.remove(i);
                bound.extend(literal_effect(l, bound).unwrap_or_default());
                out.push(l.clone());
            }
            None => break,
        }
    };
    for l in &r.body {
        match l {
            Literal::Choice { .. } => {}
            Literal::Atom { atom, negated: false } if !uda::is_reserved(&atom.pred) => {
                bound.extend(atom.vars());
                out.push(l.clone());
                flush(&mut bound, &mut pending, &mut out);
            }
            _ => {
                pending.push(l);
                flush(&mut bound, &mut pending, &mut out);
            }
        }
    }
    if let Some(l) = pending.first() {
        return Err(Error::Analysis(vec![Diagnostic::new(
            Some(r.pos),
            format!("rule for {}: goal {l} can never be evaluated", r.head.pred),
        )]));
    }
    Ok(out)
}

struct Slots {
    map: HashMap<Var, Slot>,
    names: Vec<Var>,
}

impl Slots {
    fn of(&mut self, v: &Var) -> Slot {
        if let Some(&s) = self.map.get(v) {
            return s;
        }
        let s = self.names.len() as Slot;
        self.map.insert(v.clone(), s);
        self.names.push(v.clone());
        s
    }

    fn term(&mut self, t: &Term, wildcard_anon: bool) -> CTerm {
        match t {
            Term::Var(v) if wildcard_anon && v.is_anonymous() => CTerm::Any,
            Term::Var(v) => CTerm::Slot(self.of(v)),
            Term::Const(c) => CTerm::Const(c.clone()),
            Term::Compound(f, args) => {
                let args: Vec<CTerm> = args.iter().map(|a| self.term(a, wildcard_anon)).collect();
                match args.iter().map(|a| if let CTerm::Const(c) = a { Some(c.clone()) } else { None }).collect::<Option<Vec<_>>>() {
                    Some(vals) => CTerm::Const(Value::Compound(Arc::new(Compound { functor: f.clone(), args: vals }))),
                    None => CTerm::Compound(f.clone(), args),
                }
            }
            Term::Temporal(v, off) => CTerm::Succ(self.of(v), *off),
        }
    }

    fn expr(&mut self, e: &Expr) -> CExpr {
        match e {
            Expr::Term(t) => CExpr::Term(self.term(t, false)),
            Expr::Neg(x) => CExpr::Neg(Box::new(self.expr(x))),
            Expr::Bin(op, a, b) => CExpr::Bin(*op, Box::new(self.expr(a)), Box::new(self.expr(b))),
        }
    }
}

fn term_slots(t: &CTerm, out: &mut Vec<Slot>) {
    match t {
        CTerm::Slot(s) | CTerm::Succ(s, _) => {
            if !out.contains(s) {
                out.push(*s)
            }
        }
        CTerm::Compound(_, args) => args.iter().for_each(|a| term_slots(a, out)),
        CTerm::Const(_) | CTerm::Any => {}
    }
}

fn expr_slots(e: &CExpr, out: &mut Vec<Slot>) {
    match e {
        CExpr::Term(t) => term_slots(t, out),
        CExpr::Neg(x) => expr_slots(x, out),
        CExpr::Bin(_, a, b) => {
            expr_slots(a, out);
            expr_slots(b, out);
        }
    }
}

pub fn goal_slots(g: &Goal) -> Vec<Slot> {
    let mut out = Vec::new();
    match g {
        Goal::Atom { args, .. } | Goal::Not { args, .. } => args.iter().for_each(|a| term_slots(a, &mut out)),
        Goal::Cmp { lhs, rhs, .. } => {
            expr_slots(lhs, &mut out);
            expr_slots(rhs, &mut out);
        }
        Goal::Func { inputs, out: o, .. } => {
            inputs.iter().for_each(|a| term_slots(a, &mut out));
            term_slots(o, &mut out);
        }
    }
    out
}

/// Compile `r` for a call in which the variables in `prebound` are bound.
pub fn compile_rule(r: &Rule, registry: &Registry, prebound: &BTreeSet<Var>) -> Result<CRule> {
    let ordered = order_body(r, prebound)?;
    let mut slots = Slots { map: HashMap::new(), names: Vec::new() };
    for v in r.vars() {
        slots.of(&v);
    }
    let mut head = Vec::new();
    for a in &r.head.args {
        head.push(match a {
            HeadArg::Term(t) => CHead::Term(slots.term(t, false)),
            HeadArg::Aggregate { name, arg } => {
                CHead::Agg { def: registry.lookup(name)?.clone(), arg: slots.term(arg, false) }
            }
        });
    }
    let mut goals = Vec::new();
    let mut goal_text = Vec::new();
    for l in &ordered {
        goal_text.push(l.to_string());
        goals.push(match l {
            Literal::Atom { atom, negated: false } if uda::is_reserved(&atom.pred) => {
                let kind = match &*atom.pred {
                    "single" => FuncKind::Single,
                    "multi" => FuncKind::Multi,
                    "ereturn" => FuncKind::Ereturn,
                    _ => FuncKind::Freturn,
                };
                let name = match atom.args.first() {
                    Some(Term::Const(Value::Sym(s))) => s.clone(),
                    _ => {
                        return Err(Error::Analysis(vec![Diagnostic::new(
                            Some(r.pos),
                            format!("rule for {}: {} needs an aggregate name as first argument", r.head.pred, atom.pred),
                        )]))
                    }
                };
                let def = registry.lookup(&name)?.clone();
                let mut args: Vec<CTerm> = atom.args[1..].iter().map(|t| slots.term(t, false)).collect();
                let out = args.pop().expect("reserved predicates have an output");
                Goal::Func { kind, def, inputs: args, out }
            }
            Literal::Atom { atom, negated: false } => {
                Goal::Atom { pred: atom.pred.clone(), args: atom.args.iter().map(|t| slots.term(t, false)).collect() }
            }
            Literal::Atom { atom, negated: true } => {
                Goal::Not { pred: atom.pred.clone(), args: atom.args.iter().map(|t| slots.term(t, true)).collect() }
            }
            Literal::Compare { op, lhs, rhs } => Goal::Cmp { op: *op, lhs: slots.expr(lhs), rhs: slots.expr(rhs) },
            Literal::Choice { .. } => unreachable!("choice goals are not ordered"),
        });
    }
    let choice_goals: Vec<(&Vec<Var>, &Vec<Var>)> = r
        .body
        .iter()
        .filter_map(|l| match l {
            Literal::Choice { left, right } => Some((left, right)),
            _ => None,
        })
        .collect();
    let choice = if choice_goals.is_empty() {
        None
    } else {
        let mut w: Vec<Var> = Vec::new();
        for (l, rr) in &choice_goals {
            for v in l.iter().chain(rr.iter()) {
                if !w.contains(v) {
                    w.push(v.clone());
                }
            }
        }
        let pos = |v: &Var| w.iter().position(|x| x == v).expect("choice variable in W");
        Some(ChoiceSpec {
            w: w.iter().map(|v| slots.of(v)).collect(),
            goals: choice_goals.iter().map(|(l, rr)| (l.iter().map(pos).collect(), rr.iter().map(pos).collect())).collect(),
        })
    };
    // Variables local to a negated goal are never bound.
    let positive: BTreeSet<Var> =
        r.body.iter().filter(|l| !matches!(l, Literal::Atom { negated: true, .. })).flat_map(|l| l.vars()).collect();
    let body_slots: Vec<Slot> = r.body_vars().iter().filter(|v| positive.contains(*v)).map(|v| slots.of(v)).collect();

    let mut bound: BTreeSet<Slot> = prebound.iter().filter_map(|v| slots.map.get(v).copied()).collect();
    let mut produces = Vec::new();
    let mut consumes = Vec::new();
    for g in &goals {
        let used = goal_slots(g);
        consumes.push(used.iter().copied().filter(|s| bound.contains(s)).collect());
        let fresh: Vec<Slot> = used.iter().copied().filter(|s| !bound.contains(s)).collect();
        bound.extend(fresh.iter().copied());
        produces.push(fresh);
    }
    Ok(CRule {
        rule: r.clone(),
        head_pred: r.head.pred.clone(),
        head,
        goals,
        goal_text,
        choice,
        nslots: slots.names.len(),
        names: slots.names,
        body_slots,
        produces,
        consumes,
    })
}

/// Variable bindings of one rule activation with an undo trail.
#[derive(Clone, Debug)]
pub struct Frame {
    vals: Vec<Option<Value>>,
    trail: Vec<Slot>,
}

impl Frame {
    pub fn new(n: usize) -> Frame {
        Frame { vals: vec![None; n], trail: Vec::new() }
    }

    pub fn get(&self, s: Slot) -> Option<&Value> {
        self.vals[s as usize].as_ref()
    }

    pub fn bind(&mut self, s: Slot, v: Value) {
        debug_assert!(self.vals[s as usize].is_none());
        self.vals[s as usize] = Some(v);
        self.trail.push(s);
    }

    pub fn mark(&self) -> usize {
        self.trail.len()
    }

    pub fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let s = self.trail.pop().expect("trail");
            self.vals[s as usize] = None;
        }
    }

    pub fn reset(&mut self) {
        self.undo(0);
    }

    pub fn values(&self, slots: &[Slot]) -> Option<Vec<Value>> {
        slots.iter().map(|&s| self.get(s).cloned()).collect()
    }
}

pub fn build(t: &CTerm, f: &Frame) -> Option<Value> {
    match t {
        CTerm::Slot(s) => f.get(*s).cloned(),
        CTerm::Const(c) => Some(c.clone()),
        CTerm::Compound(fun, args) => {
            let args = args.iter().map(|a| build(a, f)).collect::<Option<Vec<_>>>()?;
            Some(Value::Compound(Arc::new(Compound { functor: fun.clone(), args })))
        }
        CTerm::Succ(s, off) => f.get(*s)?.add(&Value::Int(*off as i64)),
        CTerm::Any => None,
    }
}

/// Match `t` against `v`, binding unbound slots.
pub fn unify(t: &CTerm, v: &Value, f: &mut Frame) -> bool {
    match t {
        CTerm::Any => true,
        CTerm::Slot(s) => match f.get(*s) {
            Some(b) => b == v,
            None => {
                f.bind(*s, v.clone());
                true
            }
        },
        CTerm::Const(c) => c == v,
        CTerm::Compound(fun, args) => match v {
            Value::Compound(c) if c.functor == *fun && c.args.len() == args.len() => {
                args.iter().zip(&c.args).all(|(a, x)| unify(a, x, f))
            }
            _ => false,
        },
        CTerm::Succ(s, off) => match f.get(*s) {
            Some(b) => b.add(&Value::Int(*off as i64)).is_some_and(|x| x == *v),
            None => match v.sub(&Value::Int(*off as i64)) {
                Some(base) if base.as_i64().is_some_and(|b| b >= 0) => {
                    f.bind(*s, base);
                    true
                }
                _ => false,
            },
        },
    }
}

pub fn unify_all(ts: &[CTerm], vs: &[Value], f: &mut Frame) -> bool {
    ts.iter().zip(vs).all(|(t, v)| unify(t, v, f))
}

pub fn pattern(args: &[CTerm], f: &Frame) -> Vec<Pat> {
    args.iter().map(|a| build(a, f).map_or(Pat::Free, Pat::Bound)).collect()
}

/// `Err(())` when some operand is unbound; `Ok(None)` when arithmetic fails.
pub fn eval_expr(e: &CExpr, f: &Frame) -> std::result::Result<Option<Value>, ()> {
    match e {
        CExpr::Term(t) => {
            let mut slots = Vec::new();
            term_slots(t, &mut slots);
            if slots.iter().any(|&s| f.get(s).is_none()) || matches!(t, CTerm::Any) {
                return Err(());
            }
            Ok(build(t, f))
        }
        CExpr::Neg(x) => Ok(eval_expr(x, f)?.and_then(|v| v.neg())),
        CExpr::Bin(op, a, b) => {
            let (a, b) = (eval_expr(a, f)?, eval_expr(b, f)?);
            let (Some(a), Some(b)) = (a, b) else { return Ok(None) };
            Ok(match op {
                ArithOp::Add => a.add(&b),
                ArithOp::Sub => a.sub(&b),
                ArithOp::Mul => a.mul(&b),
                ArithOp::Div => a.div(&b),
                ArithOp::Mod => a.modulo(&b),
            })
        }
    }
}

fn test(op: CmpOp, a: &Value, b: &Value) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Eq => a.equals(b),
        CmpOp::Ne => !a.equals(b),
        CmpOp::Lt => a.compare(b) == Less,
        CmpOp::Le => a.compare(b) != Greater,
        CmpOp::Gt => a.compare(b) == Greater,
        CmpOp::Ge => a.compare(b) != Less,
    }
}

/// Run a comparison; `=` with one unbound side binds it.
pub fn run_cmp(op: CmpOp, lhs: &CExpr, rhs: &CExpr, f: &mut Frame) -> bool {
    match (eval_expr(lhs, f), eval_expr(rhs, f)) {
        (Ok(Some(a)), Ok(Some(b))) => test(op, &a, &b),
        (Ok(None), _) | (_, Ok(None)) => false,
        (Err(()), Ok(Some(v))) if op == CmpOp::Eq => match lhs {
            CExpr::Term(t) => unify(t, &v, f),
            _ => false,
        },
        (Ok(Some(v)), Err(())) if op == CmpOp::Eq => match rhs {
            CExpr::Term(t) => unify(t, &v, f),
            _ => false,
        },
        _ => false,
    }
}

/// Results of a reserved aggregate function call; no match yields nothing.
pub fn run_func(kind: FuncKind, def: &AggregateDef, inputs: &[CTerm], f: &Frame) -> Vec<Value> {
    let Some(vals) = inputs.iter().map(|t| build(t, f)).collect::<Option<Vec<_>>>() else {
        return Vec::new();
    };
    let r = match (kind, vals.as_slice()) {
        (FuncKind::Single, [y]) => def.apply_single(y).map(|v| vec![v]),
        (FuncKind::Multi, [y, old]) => def.apply_multi(y, old).map(|v| vec![v]),
        (FuncKind::Ereturn, [y, old]) => def.early_returns(y, old),
        (FuncKind::Freturn, [y, old]) => def.final_returns(y, old),
        _ => Ok(Vec::new()),
    };
    r.unwrap_or_default()
}

impl fmt::Display for CRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::uda::builtin_catalog;

    #[test]
    fn negation_waits_for_bindings() {
        let p = parse_program("p(X, Y) <- ~r(Y), X > 1, q(X), s(Y).").unwrap();
        let order = order_body(&p.rules[0], &BTreeSet::new()).unwrap();
        let text: Vec<String> = order.iter().map(|l| l.to_string()).collect();
        assert_eq!(text, ["q(X)", "X > 1", "s(Y)", "~r(Y)"]);
    }

    #[test]
    fn produced_and_consumed_slots() {
        let p = parse_program("query3(A, B) <- b1(A), p(A, B), b2(A).").unwrap();
        let c = compile_rule(&p.rules[0], &builtin_catalog(), &BTreeSet::new()).unwrap();
        assert_eq!(c.produces, vec![vec![0], vec![1], vec![]]);
        assert_eq!(c.consumes, vec![vec![], vec![0], vec![0]]);
    }

    #[test]
    fn assignment_and_successor() {
        let mut f = Frame::new(3);
        f.bind(0, Value::Int(4));
        let rhs = CExpr::Bin(ArithOp::Add, Box::new(CExpr::Term(CTerm::Slot(0))), Box::new(CExpr::Term(CTerm::Const(Value::Int(1)))));
        assert!(run_cmp(CmpOp::Eq, &CExpr::Term(CTerm::Slot(1)), &rhs, &mut f));
        assert_eq!(f.get(1), Some(&Value::Int(5)));
        assert!(unify(&CTerm::Succ(2, 1), &Value::Int(3), &mut f));
        assert_eq!(f.get(2), Some(&Value::Int(2)));
        f.undo(1);
        assert_eq!(f.get(1), None);
    }
}
