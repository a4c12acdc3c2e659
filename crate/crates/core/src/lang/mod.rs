//! Surface language: abstract syntax, parser and printer.
//!
//! Concrete syntax: rules `head <- g1, g2.`, facts `p(a).`, negation `~g`,
//! head aggregates `name<Arg>`, choice goals `choice((X,Y),(Z))`, tuples
//! `(From, To)` and the postfix successor `J+1` in the first argument
//! position. External relations are declared in a `database({ ... }).` block.

mod lexer;
mod parser;
mod print;
mod temporal;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::value::{Compound, Value};

pub use parser::parse_program;
pub use print::print_program;
pub use parser::parse_atom;
pub use temporal::{temporal_argument, TemporalInfo, TemporalTerm};

/// Source position. Positions never take part in structural equality.
#[derive(Clone, Copy, Debug, Default, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

/// A logical variable. Anonymous `_` occurrences become distinct variables
/// whose names begin with `_#` and print back as `_`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_anonymous(&self) -> bool {
        self.0.starts_with("_#")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Const(Value),
    /// Compound term; an empty functor is a tuple `(a, b)`.
    Compound(Arc<str>, Vec<Term>),
    /// `J+1` in a temporal position. The offset is 0 or 1.
    Temporal(Var, u8),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn sym(s: &str) -> Term {
        Term::Const(Value::sym(s))
    }

    pub fn int(i: i64) -> Term {
        Term::Const(Value::Int(i))
    }

    pub fn from_value(v: &Value) -> Term {
        match v {
            Value::Compound(c) => {
                Term::Compound(c.functor.clone(), c.args.iter().map(Term::from_value).collect())
            }
            other => Term::Const(other.clone()),
        }
    }

    /// The ground value of this term, if it contains no variables.
    pub fn ground_value(&self) -> Option<Value> {
        match self {
            Term::Const(v) => Some(v.clone()),
            Term::Compound(f, args) => {
                let args = args.iter().map(Term::ground_value).collect::<Option<Vec<_>>>()?;
                Some(Value::Compound(Arc::new(Compound { functor: f.clone(), args })))
            }
            Term::Var(_) | Term::Temporal(..) => None,
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) | Term::Temporal(v, _) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn rename(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Temporal(v, off) => match f(v) {
                Term::Var(nv) => Term::Temporal(nv, *off),
                other => other,
            },
            Term::Const(c) => Term::Const(c.clone()),
            Term::Compound(fun, args) => {
                Term::Compound(fun.clone(), args.iter().map(|a| a.rename(f)).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Term(Term),
    Neg(Box<Expr>),
    Bin(ArithOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Term(t) => t.collect_vars(out),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            Expr::Term(t) => Some(t),
            _ => None,
        }
    }

    pub fn rename(&self, f: &mut impl FnMut(&Var) -> Term) -> Expr {
        match self {
            Expr::Term(t) => Expr::Term(t.rename(f)),
            Expr::Neg(e) => Expr::Neg(Box::new(e.rename(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.rename(f)), Box::new(b.rename(f))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: Arc<str>,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom { pred: Arc::from(pred), args }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_vars(&mut out);
        }
        out
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|a| a.ground_value().is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Atom { atom: Atom, negated: bool },
    Choice { left: Vec<Var>, right: Vec<Var> },
    Compare { op: CmpOp, lhs: Expr, rhs: Expr },
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal::Atom { atom, negated: false }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal::Atom { atom, negated: true }
    }

    pub fn compare(op: CmpOp, lhs: Term, rhs: Term) -> Literal {
        Literal::Compare { op, lhs: Expr::Term(lhs), rhs: Expr::Term(rhs) }
    }

    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Atom { atom, .. } => Some(atom),
            _ => None,
        }
    }

    pub fn positive_atom(&self) -> Option<&Atom> {
        match self {
            Literal::Atom { atom, negated: false } => Some(atom),
            _ => None,
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        match self {
            Literal::Atom { atom, .. } => {
                for a in &atom.args {
                    a.collect_vars(&mut out);
                }
            }
            Literal::Choice { left, right } => {
                for v in left.iter().chain(right) {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
            Literal::Compare { lhs, rhs, .. } => {
                lhs.collect_vars(&mut out);
                rhs.collect_vars(&mut out);
            }
        }
        out
    }

    pub fn rename(&self, f: &mut impl FnMut(&Var) -> Term) -> Literal {
        let rv = |v: &Var, f: &mut dyn FnMut(&Var) -> Term| match f(v) {
            Term::Var(nv) => nv,
            _ => v.clone(),
        };
        match self {
            Literal::Atom { atom, negated } => Literal::Atom {
                atom: Atom { pred: atom.pred.clone(), args: atom.args.iter().map(|a| a.rename(f)).collect() },
                negated: *negated,
            },
            Literal::Choice { left, right } => Literal::Choice {
                left: left.iter().map(|v| rv(v, f)).collect(),
                right: right.iter().map(|v| rv(v, f)).collect(),
            },
            Literal::Compare { op, lhs, rhs } => {
                Literal::Compare { op: *op, lhs: lhs.rename(f), rhs: rhs.rename(f) }
            }
        }
    }
}

/// A head argument: an ordinary term or an aggregate application `name<Arg>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HeadArg {
    Term(Term),
    Aggregate { name: Arc<str>, arg: Term },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Head {
    pub pred: Arc<str>,
    pub args: Vec<HeadArg>,
}

impl Head {
    pub fn from_atom(atom: Atom) -> Head {
        Head { pred: atom.pred, args: atom.args.into_iter().map(HeadArg::Term).collect() }
    }

    /// The head as an atom when it has no aggregate arguments.
    pub fn as_atom(&self) -> Option<Atom> {
        let args = self
            .args
            .iter()
            .map(|a| match a {
                HeadArg::Term(t) => Some(t.clone()),
                HeadArg::Aggregate { .. } => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Atom { pred: self.pred.clone(), args })
    }

    pub fn has_aggregates(&self) -> bool {
        self.args.iter().any(|a| matches!(a, HeadArg::Aggregate { .. }))
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for a in &self.args {
            match a {
                HeadArg::Term(t) | HeadArg::Aggregate { arg: t, .. } => t.collect_vars(&mut out),
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
    pub pos: Pos,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Rule {
        Rule { head: Head::from_atom(head), body, pos: Pos::default() }
    }

    pub fn is_aggregate_rule(&self) -> bool {
        self.head.has_aggregates()
    }

    pub fn has_choice(&self) -> bool {
        self.body.iter().any(|l| matches!(l, Literal::Choice { .. }))
    }

    /// Every variable of the rule in order of first occurrence (head first).
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.head.vars();
        for l in &self.body {
            for v in l.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Variables of the body in order of first occurrence.
    pub fn body_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.body {
            if matches!(l, Literal::Choice { .. }) {
                continue;
            }
            for v in l.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn body_preds(&self) -> impl Iterator<Item = &Arc<str>> {
        self.body.iter().filter_map(|l| l.atom().map(|a| &a.pred))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int,
    Float,
    String,
    Any,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::String => "string",
            ColumnType::Any => "any",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Internal,
    /// Relation served by an adapter. Connection options other than the
    /// adapter id are kept for printing but not interpreted.
    External { adapter: String, table: String, options: Vec<(String, String)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SchemaDecl {
    pub pred: Arc<str>,
    pub columns: Vec<Column>,
    pub source: Source,
    pub pos: Pos,
}

impl SchemaDecl {
    pub fn is_external(&self) -> bool {
        matches!(self.source, Source::External { .. })
    }

    pub fn adapter(&self) -> Option<&str> {
        match &self.source {
            Source::External { adapter, .. } => Some(adapter),
            Source::Internal => None,
        }
    }

    pub fn table(&self) -> &str {
        match &self.source {
            Source::External { table, .. } => table,
            Source::Internal => &self.pred,
        }
    }
}

/// A parsed program: rules, schema declarations and ground facts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub schema: Vec<SchemaDecl>,
    pub facts: Vec<Atom>,
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.schema.is_empty() && self.facts.is_empty()
    }

    /// Append another program (used when loading several files).
    pub fn extend(&mut self, other: Program) {
        self.rules.extend(other.rules);
        self.schema.extend(other.schema);
        self.facts.extend(other.facts);
    }

    /// Predicates defined by at least one rule.
    pub fn derived_preds(&self) -> BTreeSet<Arc<str>> {
        self.rules.iter().map(|r| r.head.pred.clone()).collect()
    }

    pub fn schema_for(&self, pred: &str) -> Option<&SchemaDecl> {
        self.schema.iter().find(|s| &*s.pred == pred)
    }

    /// Arity of every predicate, checking consistency across all uses.
    pub fn arities(&self) -> Result<HashMap<Arc<str>, usize>> {
        let mut out: HashMap<Arc<str>, usize> = HashMap::new();
        let mut note = |pred: &Arc<str>, n: usize| -> Result<()> {
            match out.get(pred) {
                Some(&m) if m != n => Err(Error::Arity { pred: pred.to_string(), expected: m, found: n }),
                Some(_) => Ok(()),
                None => {
                    out.insert(pred.clone(), n);
                    Ok(())
                }
            }
        };
        for s in &self.schema {
            note(&s.pred, s.columns.len())?;
        }
        for f in &self.facts {
            note(&f.pred, f.args.len())?;
        }
        for r in &self.rules {
            note(&r.head.pred, r.head.args.len())?;
            for l in &r.body {
                if let Some(a) = l.atom() {
                    note(&a.pred, a.args.len())?;
                }
            }
        }
        Ok(out)
    }
}
