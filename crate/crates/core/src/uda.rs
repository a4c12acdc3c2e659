//! User-defined aggregates.
//!
//! An aggregate is given by rules over the reserved predicates `single`,
//! `multi`, `ereturn` and `freturn`, whose first argument is the aggregate
//! name. Those rules are interpreted as functions: the head patterns are
//! matched against the inputs, the body comparisons bind the outputs.
//!
//! For the first element of a group the old state passed to `ereturn` is the
//! symbol `nil`, which lets online aggregates report on the first element.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::lang::{parse_program, CmpOp, Expr, HeadArg, Literal, Program, Rule, Term, Var};
pub use crate::store::GroupCursor;
use crate::value::{Compound, Value};

/// Reserved predicate names of aggregate definition rules.
pub const RESERVED: [&str; 4] = ["single", "multi", "ereturn", "freturn"];

pub fn is_reserved(pred: &str) -> bool {
    RESERVED.contains(&pred)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Monotone,
    Nonmonotone,
}

#[derive(Clone, Debug)]
pub struct AggregateDef {
    pub name: Arc<str>,
    pub single: Vec<Rule>,
    pub multi: Vec<Rule>,
    pub ereturn: Vec<Rule>,
    pub freturn: Vec<Rule>,
}

/// Name of the aggregate a definition rule belongs to, if it is one.
pub fn definition_target(r: &Rule) -> Option<Arc<str>> {
    if !is_reserved(&r.head.pred) {
        return None;
    }
    match r.head.args.first() {
        Some(HeadArg::Term(Term::Const(Value::Sym(s)))) => Some(s.clone()),
        _ => None,
    }
}

impl AggregateDef {
    pub fn new(name: &str) -> AggregateDef {
        AggregateDef {
            name: Arc::from(name),
            single: Vec::new(),
            multi: Vec::new(),
            ereturn: Vec::new(),
            freturn: Vec::new(),
        }
    }

    /// Collect the definition rules for `name` out of a rule list.
    pub fn from_rules<'a>(name: &str, rules: impl IntoIterator<Item = &'a Rule>) -> AggregateDef {
        let mut def = AggregateDef::new(name);
        for r in rules {
            if definition_target(r).as_deref() != Some(name) {
                continue;
            }
            let r = r.clone();
            match &*r.head.pred {
                "single" => def.single.push(r),
                "multi" => def.multi.push(r),
                "ereturn" => def.ereturn.push(r),
                _ => def.freturn.push(r),
            }
        }
        def
    }

    pub fn is_monotone(&self) -> bool {
        self.freturn.is_empty()
    }

    pub fn monotonicity(&self) -> Monotonicity {
        if self.is_monotone() {
            Monotonicity::Monotone
        } else {
            Monotonicity::Nonmonotone
        }
    }

    fn validate(&self) -> Result<()> {
        let incomplete = |reason: &str| Error::IncompleteAggregate { name: self.name.to_string(), reason: reason.into() };
        if self.single.is_empty() {
            return Err(incomplete("no single rule"));
        }
        if self.multi.is_empty() {
            return Err(incomplete("no multi rule"));
        }
        let arity_ok = |rules: &[Rule], n: usize| rules.iter().all(|r| r.head.args.len() == n);
        if !arity_ok(&self.single, 3)
            || !arity_ok(&self.multi, 4)
            || !arity_ok(&self.ereturn, 4)
            || !arity_ok(&self.freturn, 4)
        {
            return Err(incomplete("definition rule with wrong arity"));
        }
        for r in self.single.iter().chain(&self.multi).chain(&self.ereturn).chain(&self.freturn) {
            if r.body.iter().any(|l| !matches!(l, Literal::Compare { .. })) {
                return Err(incomplete("definition rule bodies may only contain comparisons"));
            }
        }
        Ok(())
    }

    /// State after the first element.
    pub fn apply_single(&self, y: &Value) -> Result<Value> {
        first_result(&self.single, &[y])?.ok_or_else(|| self.no_match("single", y))
    }

    /// State after a later element; the first matching multi rule wins.
    pub fn apply_multi(&self, y: &Value, old: &Value) -> Result<Value> {
        first_result(&self.multi, &[y, old])?.ok_or_else(|| self.no_match("multi", y))
    }

    /// Every early return for element `y` arriving in state `old`.
    pub fn early_returns(&self, y: &Value, old: &Value) -> Result<Vec<Value>> {
        all_results(&self.ereturn, &[y, old])
    }

    /// Every final return for last element `y` and final state.
    pub fn final_returns(&self, y: &Value, state: &Value) -> Result<Vec<Value>> {
        all_results(&self.freturn, &[y, state])
    }

    fn no_match(&self, kind: &str, y: &Value) -> Error {
        Error::IncompleteAggregate { name: self.name.to_string(), reason: format!("no {kind} rule matches element {y}") }
    }
}

/// Feed one element to a group. Returns the early returns it produced.
pub fn feed(def: &AggregateDef, gc: &mut GroupCursor, y: &Value) -> Result<Vec<Value>> {
    let old = if gc.count == 0 { Value::sym("nil") } else { gc.state.clone() };
    let early = def.early_returns(y, &old)?;
    gc.state = if gc.count == 0 { def.apply_single(y)? } else { def.apply_multi(y, &old)? };
    gc.count += 1;
    gc.last_element = Some(y.clone());
    if let Some(last) = early.last() {
        gc.last_early = Some(last.clone());
    }
    Ok(early)
}

/// Final return of a group, absent for monotone aggregates or empty groups.
pub fn finalize(def: &AggregateDef, gc: &GroupCursor) -> Result<Option<Value>> {
    Ok(finalize_all(def, gc)?.into_iter().next())
}

pub fn finalize_all(def: &AggregateDef, gc: &GroupCursor) -> Result<Vec<Value>> {
    match (&gc.last_element, gc.count) {
        (Some(y), n) if n > 0 => def.final_returns(y, &gc.state),
        _ => Ok(Vec::new()),
    }
}

/// Fold a whole sequence, returning (early returns, final returns).
pub fn fold(def: &AggregateDef, items: &[Value]) -> Result<(Vec<Value>, Vec<Value>)> {
    let mut gc = GroupCursor::new(Vec::new());
    let mut early = Vec::new();
    for y in items {
        early.extend(feed(def, &mut gc, y)?);
    }
    Ok((early, finalize_all(def, &gc)?))
}

#[derive(Clone, Debug)]
struct Entry {
    def: Arc<AggregateDef>,
    builtin: bool,
}

/// Aggregate definitions by name. Program definitions shadow builtins.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    entries: IndexMap<Arc<str>, Entry>,
}

impl Registry {
    pub fn empty() -> Registry {
        Registry::default()
    }

    pub fn register(&mut self, def: AggregateDef) -> Result<()> {
        def.validate()?;
        if self.entries.get(&def.name).is_some_and(|e| !e.builtin) {
            return Err(Error::DuplicateAggregate(def.name.to_string()));
        }
        self.entries.insert(def.name.clone(), Entry { def: Arc::new(def), builtin: false });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<AggregateDef>> {
        self.entries.get(name).map(|e| &e.def)
    }

    pub fn lookup(&self, name: &str) -> Result<&Arc<AggregateDef>> {
        self.get(name).ok_or_else(|| Error::UnknownAggregate(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// True when `name` resolves to the builtin definition, not a program's own.
    pub fn is_builtin(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.builtin)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| &**k)
    }

    /// Builtins plus every aggregate defined in `program`.
    pub fn for_program(program: &Program) -> Result<Registry> {
        let mut reg = builtin_catalog();
        reg.register_program(program)?;
        Ok(reg)
    }

    pub fn register_program(&mut self, program: &Program) -> Result<()> {
        let mut names: Vec<Arc<str>> = Vec::new();
        for r in &program.rules {
            if let Some(n) = definition_target(r) {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        for n in names {
            self.register(AggregateDef::from_rules(&n, &program.rules))?;
        }
        Ok(())
    }
}

const BUILTIN_SOURCE: &str = r#"
single(count, Y, 1).
multi(count, Y, Old, New) <- New = Old + 1.
freturn(count, Y, C, C).

single(sum, Y, Y).
multi(sum, Y, Old, New) <- New = Old + Y.
freturn(sum, Y, S, S).

single(min, Y, Y).
multi(min, Y, Old, Y) <- Y < Old.
multi(min, Y, Old, Old) <- Y >= Old.
freturn(min, Y, M, M).

single(max, Y, Y).
multi(max, Y, Old, Y) <- Y > Old.
multi(max, Y, Old, Old) <- Y <= Old.
freturn(max, Y, M, M).

single(avg, Y, cs(1, Y)).
multi(avg, Y, cs(Cnt, Sum), cs(Cnt1, Sum1)) <- Cnt1 = Cnt + 1, Sum1 = Sum + Y.
freturn(avg, Y, cs(Cnt, Sum), Val) <- Val = Sum / Cnt.

single(mcount, Y, 1).
multi(mcount, Y, Old, New) <- New = Old + 1.
ereturn(mcount, Y, nil, 1).
ereturn(mcount, Y, Old, New) <- New = Old + 1.

single(msum, Y, Y).
multi(msum, Y, Old, New) <- New = Old + Y.
ereturn(msum, Y, nil, Y).
ereturn(msum, Y, Old, New) <- New = Old + Y.

single(coales, (Frm, To), (Frm, To)).
multi(coales, (Nfr, Nto), (Cfr, Cto), (Cfr, Nto)) <- Nfr <= Cto, Nto > Cto.
multi(coales, (Nfr, Nto), (Cfr, Cto), (Cfr, Cto)) <- Nfr <= Cto, Nto <= Cto.
multi(coales, (Nfr, Nto), (Cfr, Cto), (Nfr, Nto)) <- Cto < Nfr.
ereturn(coales, (Nfr, Nto), (Cfr, Cto), (Cfr, Cto)) <- Cto < Nfr.
freturn(coales, _, LastInt, LastInt).
"#;

/// Builtin aggregates as source text.
pub fn builtin_source() -> &'static str {
    BUILTIN_SOURCE
}

/// Registry with count, sum, min, max, avg, mcount, msum and coales.
pub fn builtin_catalog() -> Registry {
    static CATALOG: OnceLock<Registry> = OnceLock::new();
    CATALOG
        .get_or_init(|| {
            let program = parse_program(BUILTIN_SOURCE).expect("builtin aggregates parse");
            let mut reg = Registry::empty();
            reg.register_program(&program).expect("builtin aggregates are complete");
            for e in reg.entries.values_mut() {
                e.builtin = true;
            }
            reg
        })
        .clone()
}

type Env = HashMap<Var, Value>;

fn first_result(rules: &[Rule], inputs: &[&Value]) -> Result<Option<Value>> {
    for r in rules {
        if let Some(v) = apply_rule(r, inputs)? {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

fn all_results(rules: &[Rule], inputs: &[&Value]) -> Result<Vec<Value>> {
    let mut out = Vec::new();
    for r in rules {
        if let Some(v) = apply_rule(r, inputs)? {
            out.push(v);
        }
    }
    Ok(out)
}

fn head_term(r: &Rule, i: usize) -> &Term {
    match &r.head.args[i] {
        HeadArg::Term(t) => t,
        HeadArg::Aggregate { arg, .. } => arg,
    }
}

/// Apply one definition rule. Inputs match head arguments 1.. and the result
/// is built from the last head argument.
fn apply_rule(r: &Rule, inputs: &[&Value]) -> Result<Option<Value>> {
    let mut env = Env::new();
    for (i, v) in inputs.iter().enumerate() {
        if !match_term(head_term(r, i + 1), v, &mut env) {
            return Ok(None);
        }
    }
    let mut pending: Vec<&Literal> = r.body.iter().collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut rest = Vec::new();
        for l in pending {
            let Literal::Compare { op, lhs, rhs } = l else { unreachable!("validated") };
            match compare(*op, lhs, rhs, &mut env) {
                Some(true) => {}
                Some(false) => return Ok(None),
                None => rest.push(l),
            }
        }
        if rest.len() == before {
            // Arithmetic on a value of the wrong type simply fails the rule.
            return Ok(None);
        }
        pending = rest;
    }
    let out = head_term(r, r.head.args.len() - 1);
    match build(out, &env) {
        Some(v) => Ok(Some(v)),
        None => Err(Error::IncompleteAggregate {
            name: definition_target(r).map(|s| s.to_string()).unwrap_or_default(),
            reason: format!("result of {} rule is not bound", r.head.pred),
        }),
    }
}

fn match_term(pat: &Term, v: &Value, env: &mut Env) -> bool {
    match pat {
        Term::Var(x) if x.is_anonymous() => true,
        Term::Var(x) => match env.get(x) {
            Some(b) => b == v,
            None => {
                env.insert(x.clone(), v.clone());
                true
            }
        },
        Term::Const(c) => c == v,
        Term::Compound(f, args) => match v {
            Value::Compound(c) if c.functor == *f && c.args.len() == args.len() => {
                args.iter().zip(&c.args).all(|(p, x)| match_term(p, x, env))
            }
            _ => false,
        },
        Term::Temporal(..) => false,
    }
}

fn build(t: &Term, env: &Env) -> Option<Value> {
    match t {
        Term::Var(x) => env.get(x).cloned(),
        Term::Const(c) => Some(c.clone()),
        Term::Compound(f, args) => {
            let args = args.iter().map(|a| build(a, env)).collect::<Option<Vec<_>>>()?;
            Some(Value::Compound(Arc::new(Compound { functor: f.clone(), args })))
        }
        Term::Temporal(x, off) => env.get(x)?.add(&Value::Int(*off as i64)),
    }
}

/// `Err(())` when an operand is unbound, `Ok(None)` when arithmetic fails.
fn eval(e: &Expr, env: &Env) -> std::result::Result<Option<Value>, ()> {
    use crate::lang::ArithOp::*;
    match e {
        Expr::Term(t) => {
            let mut vars = Vec::new();
            t.collect_vars(&mut vars);
            if vars.iter().any(|v| !env.contains_key(v)) {
                return Err(());
            }
            Ok(build(t, env))
        }
        Expr::Neg(inner) => Ok(eval(inner, env)?.and_then(|v| v.neg())),
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval(a, env)?, eval(b, env)?);
            let (Some(a), Some(b)) = (a, b) else { return Ok(None) };
            Ok(match op {
                Add => a.add(&b),
                Sub => a.sub(&b),
                Mul => a.mul(&b),
                Div => a.div(&b),
                Mod => a.modulo(&b),
            })
        }
    }
}

/// Evaluate a comparison, binding an unbound side of `=`. `None` means not
/// yet evaluable.
fn compare(op: CmpOp, lhs: &Expr, rhs: &Expr, env: &mut Env) -> Option<bool> {
    let l = eval(lhs, env);
    let r = eval(rhs, env);
    match (l, r) {
        (Ok(l), Ok(r)) => {
            let (Some(l), Some(r)) = (l, r) else { return Some(false) };
            let ord = l.compare(&r);
            Some(match op {
                CmpOp::Eq => ord.is_eq(),
                CmpOp::Ne => ord.is_ne(),
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
            })
        }
        (Err(()), Ok(r)) if op == CmpOp::Eq => match (lhs.as_term(), r) {
            (Some(t), Some(v)) => Some(match_term(t, &v, env)),
            (Some(_), None) => Some(false),
            _ => None,
        },
        (Ok(l), Err(())) if op == CmpOp::Eq => match (rhs.as_term(), l) {
            (Some(t), Some(v)) => Some(match_term(t, &v, env)),
            (Some(_), None) => Some(false),
            _ => None,
        },
        _ => None,
    }
}
