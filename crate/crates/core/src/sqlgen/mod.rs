//! Offload of rule bodies over external relations as SQL queries.

mod csv;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub use self::csv::CsvAdapter;

use crate::error::{Error, Result};
use crate::lang::{ArithOp, Atom, CmpOp, Expr, HeadArg, Literal, Program, Rule, SchemaDecl, Term, Var};
use crate::store::Tuple;
use crate::uda::{self, Registry};
use crate::value::Value;

/// Aggregates that map onto SQL aggregate functions.
pub const SQL_AGGREGATES: [&str; 5] = ["count", "sum", "min", "max", "avg"];

#[derive(Clone, Debug, PartialEq)]
pub struct ColRef {
    /// Alias number, unique within the whole query including subqueries.
    pub alias: usize,
    pub table: String,
    pub column: String,
    /// Position of the column in the relation.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SqlExpr {
    Col(ColRef),
    Lit(Value),
    Neg(Box<SqlExpr>),
    Bin(ArithOp, Box<SqlExpr>, Box<SqlExpr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cond {
    Cmp(CmpOp, SqlExpr, SqlExpr),
    NotExists(Box<SqlQuery>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SelectItem {
    Expr(SqlExpr),
    Agg { func: String, arg: SqlExpr },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FromItem {
    pub alias: usize,
    pub table: String,
    pub pred: Arc<str>,
    pub arity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SqlQuery {
    /// Adapter id serving every relation of the query.
    pub adapter: String,
    /// Empty in NOT EXISTS subqueries.
    pub select: Vec<SelectItem>,
    pub from: Vec<FromItem>,
    pub conds: Vec<Cond>,
    pub group_by: Vec<SqlExpr>,
}

impl SqlQuery {
    /// Every column of an external relation.
    pub fn scan(decl: &SchemaDecl) -> SqlQuery {
        let table = decl.table().to_string();
        let select = decl
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| SelectItem::Expr(SqlExpr::Col(ColRef { alias: 0, table: table.clone(), column: c.name.clone(), index: i })))
            .collect();
        SqlQuery {
            adapter: decl.adapter().unwrap_or_default().to_string(),
            select,
            from: vec![FromItem { alias: 0, table, pred: decl.pred.clone(), arity: decl.columns.len() }],
            conds: Vec::new(),
            group_by: Vec::new(),
        }
    }

    pub fn has_aggregates(&self) -> bool {
        self.select.iter().any(|s| matches!(s, SelectItem::Agg { .. }))
    }

    pub fn has_not_exists(&self) -> bool {
        self.conds.iter().any(|c| matches!(c, Cond::NotExists(_)))
    }

    /// The query restricted to rows whose `i`-th output equals `v`, where
    /// that output is a plain expression.
    pub fn restrict(&self, bound: &[(usize, Value)]) -> SqlQuery {
        let mut q = self.clone();
        for (i, v) in bound {
            if let Some(SelectItem::Expr(e)) = self.select.get(*i) {
                q.conds.push(Cond::Cmp(CmpOp::Eq, e.clone(), SqlExpr::Lit(v.clone())));
            }
        }
        q
    }
}

fn write_lit(v: &Value, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        Value::Sym(s) => write!(f, "'{}'", s.replace('\'', "''")),
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for ColRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}.{}", self.table, self.alias, self.column)
    }
}

impl fmt::Display for SqlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlExpr::Col(c) => write!(f, "{c}"),
            SqlExpr::Lit(v) => write_lit(v, f),
            SqlExpr::Neg(x) => write!(f, "-({x})"),
            SqlExpr::Bin(op, a, b) => {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "/",
                    ArithOp::Mod => "%",
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}

fn cmp_symbol(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "=",
        CmpOp::Ne => "<>",
        CmpOp::Lt => "<",
        CmpOp::Le => "<=",
        CmpOp::Gt => ">",
        CmpOp::Ge => ">=",
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::Cmp(op, a, b) => write!(f, "{a} {} {b}", cmp_symbol(*op)),
            Cond::NotExists(q) => write!(f, "NOT EXISTS ({})", q.to_string().split_whitespace().collect::<Vec<_>>().join(" ")),
        }
    }
}

impl fmt::Display for SelectItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Expr(e) => write!(f, "{e}"),
            SelectItem::Agg { func, arg } => write!(f, "{}({arg})", func.to_uppercase()),
        }
    }
}

impl fmt::Display for SqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let select: Vec<String> = self.select.iter().map(|s| s.to_string()).collect();
        let from: Vec<String> = self.from.iter().map(|t| format!("{} {}_{}", t.table, t.table, t.alias)).collect();
        write!(f, "SELECT  {}", if select.is_empty() { "*".to_string() } else { select.join(", ") })?;
        write!(f, "\nFROM    {}", from.join(", "))?;
        if !self.conds.is_empty() {
            let conds: Vec<String> = self.conds.iter().map(|c| c.to_string()).collect();
            write!(f, "\nWHERE   {}", conds.join(" AND\n        "))?;
        }
        if !self.group_by.is_empty() {
            let g: Vec<String> = self.group_by.iter().map(|e| e.to_string()).collect();
            write!(f, "\nGROUP BY {}", g.join(", "))?;
        }
        Ok(())
    }
}

/// Collapse runs of whitespace, for comparing generated text.
pub fn normalize_sql(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// What an adapter can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub not_exists: bool,
    pub aggregates: bool,
}

/// A driver for external relations.
pub trait ExternalAdapter {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities {
        Capabilities { not_exists: true, aggregates: true }
    }

    /// Run `q`, yielding rows typed per the schema.
    fn execute(&mut self, q: &SqlQuery) -> Result<Box<dyn Iterator<Item = Tuple>>>;
}

/// Run `q` on the adapter registered for it.
pub fn execute_external(q: &SqlQuery, adapters: &mut [Box<dyn ExternalAdapter>]) -> Result<Box<dyn Iterator<Item = Tuple>>> {
    let Some(a) = adapters.iter_mut().find(|a| a.id() == q.adapter) else {
        return Err(Error::Adapter { sql: q.to_string(), message: format!("no adapter registered for {}", q.adapter) });
    };
    a.execute(q)
}

/// Offloaded queries and the adapters that run them.
#[derive(Default)]
pub struct Externals {
    pub nodes: BTreeMap<Arc<str>, SqlQuery>,
    pub adapters: Vec<Box<dyn ExternalAdapter>>,
    /// Queries sent to adapters so far.
    pub executed: u64,
}

impl Externals {
    pub fn capabilities(&self, adapter: &str) -> Option<Capabilities> {
        self.adapters.iter().find(|a| a.id() == adapter).map(|a| a.capabilities())
    }

    pub fn run(&mut self, q: &SqlQuery) -> Result<Vec<Tuple>> {
        self.executed += 1;
        Ok(execute_external(q, &mut self.adapters)?.collect())
    }

    /// Rows of a SQL node whose outputs at the given positions equal the given values.
    pub fn fetch(&mut self, node: &str, bound: &[(usize, Value)]) -> Result<Vec<Tuple>> {
        let Some(q) = self.nodes.get(node) else { return Err(Error::UnknownPredicate(node.to_string())) };
        let q = q.restrict(bound);
        let mut rows = self.run(&q)?;
        rows.retain(|t| bound.iter().all(|(k, v)| t[*k].equals(v)));
        Ok(rows)
    }
}

fn fresh_var(name: &str, taken: &mut BTreeSet<Var>) -> Var {
    let mut k = 0;
    loop {
        let v = Var::new(&format!("{name}{k}"));
        if !taken.contains(&v) {
            taken.insert(v.clone());
            return v;
        }
        k += 1;
    }
}

fn externals(p: &Program) -> BTreeMap<Arc<str>, &SchemaDecl> {
    p.schema.iter().filter(|s| s.is_external()).map(|s| (s.pred.clone(), s)).collect()
}

/// Predicates whose only rule reads nothing but external relations and
/// comparisons, and whose head arguments are distinct variables.
fn compressible(p: &Program) -> BTreeMap<Arc<str>, Rule> {
    let ext = externals(p);
    let mut by_head: BTreeMap<Arc<str>, Vec<&Rule>> = BTreeMap::new();
    for r in &p.rules {
        by_head.entry(r.head.pred.clone()).or_default().push(r);
    }
    let with_facts: BTreeSet<&Arc<str>> = p.facts.iter().map(|f| &f.pred).collect();
    by_head
        .into_iter()
        .filter(|(pred, rules)| {
            let [r] = rules.as_slice() else { return false };
            let Some(head) = r.head.as_atom() else { return false };
            let mut seen = BTreeSet::new();
            let distinct_vars = head.args.iter().all(|t| matches!(t, Term::Var(v) if !v.is_anonymous() && seen.insert(v.clone())));
            let body_ok = r.body.iter().all(|l| match l {
                Literal::Atom { atom, negated: false } => ext.contains_key(&atom.pred),
                Literal::Compare { .. } => true,
                _ => false,
            });
            distinct_vars && body_ok && !with_facts.contains(pred) && !ext.contains_key(pred) && uda::definition_target(r).is_none()
        })
        .map(|(p, rules)| (p, rules[0].clone()))
        .collect()
}

/// Unfold single-rule intermediate predicates over external relations into
/// the rules that call them. The intermediate rules themselves are kept.
pub fn compress(p: &Program) -> Program {
    let defs = compressible(p);
    let mut out = p.clone();
    let mut counter = 0usize;
    for r in out.rules.iter_mut() {
        if uda::definition_target(r).is_some() {
            continue;
        }
        // Bounded by the depth of the definitions, which are not recursive.
        for _ in 0..=defs.len() {
            let Some(i) = r.body.iter().position(|l| {
                matches!(l, Literal::Atom { atom, negated: false } if defs.contains_key(&atom.pred) && atom.pred != r.head.pred)
            }) else {
                break;
            };
            let Literal::Atom { atom, .. } = r.body[i].clone() else { unreachable!() };
            let def = &defs[&atom.pred];
            let mut taken: BTreeSet<Var> = r.vars().into_iter().collect();
            let head = def.head.as_atom().expect("plain head");
            let mut map: BTreeMap<Var, Term> = BTreeMap::new();
            for (h, a) in head.args.iter().zip(&atom.args) {
                if let Term::Var(v) = h {
                    map.insert(v.clone(), a.clone());
                }
            }
            for v in def.vars() {
                if !map.contains_key(&v) {
                    counter += 1;
                    let nv = if v.is_anonymous() {
                        Var::new(&format!("_#c{counter}"))
                    } else {
                        fresh_var(&format!("{}_", v.name()), &mut taken)
                    };
                    map.insert(v, Term::Var(nv));
                }
            }
            let body: Vec<Literal> = def.body.iter().map(|l| l.rename(&mut |v| map[v].clone())).collect();
            r.body.splice(i..=i, body);
        }
    }
    out
}

/// A rule rewritten to read one SQL node, and the query behind the node.
#[derive(Clone, Debug)]
pub struct Collapsed {
    pub rule: Rule,
    pub node: Arc<str>,
    pub query: SqlQuery,
}

struct Gen<'a> {
    ext: &'a BTreeMap<Arc<str>, &'a SchemaDecl>,
    next_alias: usize,
}

impl Gen<'_> {
    fn col(&self, decl: &SchemaDecl, alias: usize, i: usize) -> SqlExpr {
        SqlExpr::Col(ColRef { alias, table: decl.table().to_string(), column: decl.columns[i].name.clone(), index: i })
    }

    fn term(&self, t: &Term, vars: &BTreeMap<Var, SqlExpr>) -> Option<SqlExpr> {
        match t {
            Term::Var(v) => vars.get(v).cloned(),
            Term::Const(c) if !matches!(c, Value::Compound(_)) => Some(SqlExpr::Lit(c.clone())),
            _ => None,
        }
    }

    fn expr(&self, e: &Expr, vars: &BTreeMap<Var, SqlExpr>) -> Option<SqlExpr> {
        match e {
            Expr::Term(t) => self.term(t, vars),
            Expr::Neg(x) => Some(SqlExpr::Neg(Box::new(self.expr(x, vars)?))),
            Expr::Bin(op, a, b) => Some(SqlExpr::Bin(*op, Box::new(self.expr(a, vars)?), Box::new(self.expr(b, vars)?))),
        }
    }

    /// Add `atom` to the FROM list. Returns its conditions; new variables go into `vars`.
    fn atom(&mut self, atom: &Atom, vars: &mut BTreeMap<Var, SqlExpr>, from: &mut Vec<FromItem>) -> Vec<Cond> {
        let decl = self.ext[&atom.pred];
        let alias = self.next_alias;
        self.next_alias += 1;
        from.push(FromItem { alias, table: decl.table().to_string(), pred: atom.pred.clone(), arity: decl.columns.len() });
        let mut conds = Vec::new();
        for (i, t) in atom.args.iter().enumerate() {
            let col = self.col(decl, alias, i);
            match t {
                Term::Var(v) if v.is_anonymous() => {}
                Term::Var(v) => match vars.get(v) {
                    Some(e) => conds.push(Cond::Cmp(CmpOp::Eq, col, e.clone())),
                    None => {
                        vars.insert(v.clone(), col);
                    }
                },
                Term::Const(c) => conds.push(Cond::Cmp(CmpOp::Eq, col, SqlExpr::Lit(c.clone()))),
                _ => unreachable!("checked by atom_ok"),
            }
        }
        conds
    }
}

fn atom_ok(atom: &Atom, ext: &BTreeMap<Arc<str>, &SchemaDecl>, adapter: &str) -> bool {
    ext.get(&atom.pred).is_some_and(|d| d.adapter() == Some(adapter))
        && atom.args.iter().all(|t| match t {
            Term::Var(_) => true,
            Term::Const(c) => !matches!(c, Value::Compound(_)),
            _ => false,
        })
}

fn expr_vars(e: &Expr) -> Vec<Var> {
    let mut out = Vec::new();
    e.collect_vars(&mut out);
    out
}

/// Collapse the external goals of `r` into one SQL node named `node`.
/// Returns `None` when the rule has no positive external goal it can offload.
pub fn collapse(
    r: &Rule,
    schema: &[SchemaDecl],
    registry: &Registry,
    node: &str,
    caps: &dyn Fn(&str) -> Option<Capabilities>,
) -> Option<Collapsed> {
    if r.has_choice() || uda::definition_target(r).is_some() {
        return None;
    }
    let ext: BTreeMap<Arc<str>, &SchemaDecl> = schema.iter().filter(|s| s.is_external()).map(|s| (s.pred.clone(), s)).collect();
    let adapter = r.body.iter().find_map(|l| match l {
        Literal::Atom { atom, negated: false } => ext.get(&atom.pred).and_then(|d| d.adapter()),
        _ => None,
    })?;
    let cap = caps(adapter)?;
    let mut g = Gen { ext: &ext, next_alias: 0 };
    let mut vars: BTreeMap<Var, SqlExpr> = BTreeMap::new();
    let mut from = Vec::new();
    let mut conds = Vec::new();
    let mut used = vec![false; r.body.len()];
    let positives: Vec<usize> = r
        .body
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Literal::Atom { atom, negated: false } if atom_ok(atom, &ext, adapter)))
        .map(|(i, _)| i)
        .collect();
    // Which variables the collapsed atoms bind, to decide which comparisons join them.
    let mut bindable: BTreeSet<Var> = positives.iter().flat_map(|&i| r.body[i].vars()).collect();
    let mut assigned: BTreeSet<Var> = BTreeSet::new();
    loop {
        let mut grew = false;
        for l in &r.body {
            if let Literal::Compare { op: CmpOp::Eq, lhs, rhs } = l {
                for (a, b) in [(lhs, rhs), (rhs, lhs)] {
                    if let Some(Term::Var(v)) = a.as_term() {
                        if !bindable.contains(v) && expr_vars(b).iter().all(|x| bindable.contains(x)) {
                            bindable.insert(v.clone());
                            assigned.insert(v.clone());
                            grew = true;
                        }
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    let cmp_ok = |l: &Literal| matches!(l, Literal::Compare { .. }) && l.vars().iter().all(|v| bindable.contains(v));
    let neg_ok = |l: &Literal| match l {
        Literal::Atom { atom, negated: true } => {
            cap.not_exists && atom_ok(atom, &ext, adapter) && atom.vars().iter().all(|v| v.is_anonymous() || bindable.contains(v))
        }
        _ => false,
    };
    let mut pending: Vec<usize> = Vec::new();
    let try_pending = |pending: &mut Vec<usize>,
                           vars: &mut BTreeMap<Var, SqlExpr>,
                           conds: &mut Vec<Cond>,
                           g: &mut Gen<'_>,
                           used: &mut Vec<bool>| loop {
        let ready = pending.iter().position(|&i| {
            let l = &r.body[i];
            match l {
                Literal::Compare { op: CmpOp::Eq, lhs, rhs } => {
                    let (lv, rv) = (expr_vars(lhs), expr_vars(rhs));
                    let have = |vs: &[Var]| vs.iter().all(|v| vars.contains_key(v));
                    have(&lv) && have(&rv)
                        || matches!(lhs.as_term(), Some(Term::Var(v)) if assigned.contains(v) && !vars.contains_key(v)) && have(&rv)
                        || matches!(rhs.as_term(), Some(Term::Var(v)) if assigned.contains(v) && !vars.contains_key(v)) && have(&lv)
                }
                _ => l.vars().iter().all(|v| v.is_anonymous() || vars.contains_key(v)),
            }
        });
        let Some(k) = ready else { break };
        let i = pending.remove(k);
        used[i] = true;
        match &r.body[i] {
            Literal::Compare { op, lhs, rhs } => {
                let target = |e: &Expr| match e.as_term() {
                    Some(Term::Var(v)) if !vars.contains_key(v) => Some(v.clone()),
                    _ => None,
                };
                if *op == CmpOp::Eq {
                    if let Some(v) = target(lhs) {
                        let e = g.expr(rhs, vars).expect("inputs bound");
                        vars.insert(v, e);
                        continue;
                    }
                    if let Some(v) = target(rhs) {
                        let e = g.expr(lhs, vars).expect("inputs bound");
                        vars.insert(v, e);
                        continue;
                    }
                }
                let (a, b) = (g.expr(lhs, vars).expect("bound"), g.expr(rhs, vars).expect("bound"));
                conds.push(Cond::Cmp(*op, a, b));
            }
            Literal::Atom { atom, negated: true } => {
                let mut inner_vars = vars.clone();
                let mut inner_from = Vec::new();
                let inner = g.atom(atom, &mut inner_vars, &mut inner_from);
                conds.push(Cond::NotExists(Box::new(SqlQuery {
                    adapter: adapter.to_string(),
                    select: Vec::new(),
                    from: inner_from,
                    conds: inner,
                    group_by: Vec::new(),
                })));
            }
            _ => unreachable!("only comparisons and negations wait"),
        }
    };
    for (i, l) in r.body.iter().enumerate() {
        if positives.contains(&i) {
            let Literal::Atom { atom, .. } = l else { unreachable!() };
            used[i] = true;
            conds.extend(g.atom(atom, &mut vars, &mut from));
        } else if cmp_ok(l) || neg_ok(l) {
            pending.push(i);
        }
        try_pending(&mut pending, &mut vars, &mut conds, &mut g, &mut used);
    }
    try_pending(&mut pending, &mut vars, &mut conds, &mut g, &mut used);
    let residual: Vec<Literal> = r.body.iter().enumerate().filter(|(i, _)| !used[*i]).map(|(_, l)| l.clone()).collect();

    // Aggregates go to SQL when nothing else is left in the rule.
    let push_aggs = residual.is_empty()
        && r.head.has_aggregates()
        && cap.aggregates
        && r.head.args.iter().all(|a| match a {
            HeadArg::Term(Term::Var(v)) => vars.contains_key(v),
            HeadArg::Aggregate { name, arg: Term::Var(v) } => {
                SQL_AGGREGATES.contains(&&**name) && registry.is_builtin(name) && vars.contains_key(v)
            }
            _ => false,
        });
    let mut taken: BTreeSet<Var> = r.vars().into_iter().collect();
    let (select, group_by, node_args, head) = if push_aggs {
        let mut select = Vec::new();
        let mut group_by = Vec::new();
        let mut args = Vec::new();
        let mut head = Vec::new();
        for a in &r.head.args {
            match a {
                HeadArg::Term(Term::Var(v)) => {
                    select.push(SelectItem::Expr(vars[v].clone()));
                    group_by.push(vars[v].clone());
                    args.push(Term::Var(v.clone()));
                    head.push(a.clone());
                }
                HeadArg::Aggregate { name, arg: Term::Var(v) } => {
                    select.push(SelectItem::Agg { func: name.to_string(), arg: vars[v].clone() });
                    let out = fresh_var(&format!("{}_", name.to_uppercase()), &mut taken);
                    args.push(Term::Var(out.clone()));
                    head.push(HeadArg::Term(Term::Var(out)));
                }
                _ => unreachable!("checked by push_aggs"),
            }
        }
        (select, group_by, args, head)
    } else {
        let mut needed: Vec<Var> = Vec::new();
        let later = r.head.vars().into_iter().chain(residual.iter().flat_map(|l| l.vars()));
        for v in later {
            if vars.contains_key(&v) && !v.is_anonymous() && !needed.contains(&v) {
                needed.push(v);
            }
        }
        let select = needed.iter().map(|v| SelectItem::Expr(vars[v].clone())).collect();
        (select, Vec::new(), needed.into_iter().map(Term::Var).collect(), r.head.args.clone())
    };
    let query = SqlQuery { adapter: adapter.to_string(), select, from, conds, group_by };
    let node_pred: Arc<str> = Arc::from(node);
    let mut body = vec![Literal::pos(Atom { pred: node_pred.clone(), args: node_args })];
    body.extend(residual);
    let mut rule = r.clone();
    rule.head.args = head;
    rule.body = body;
    Some(Collapsed { rule, node: node_pred, query })
}

/// A program with its external goals offloaded.
#[derive(Clone, Debug, Default)]
pub struct Offload {
    pub program: Program,
    /// SQL node predicates and their queries.
    pub nodes: BTreeMap<Arc<str>, SqlQuery>,
    /// Original rule index and the collapsed form, per offloaded rule.
    pub collapsed: Vec<(usize, Collapsed)>,
}

/// Compress, then collapse every rule over external relations.
pub fn offload(p: &Program, registry: &Registry, caps: &dyn Fn(&str) -> Option<Capabilities>) -> Offload {
    let compressed = compress(p);
    let taken: BTreeSet<Arc<str>> = p.rules.iter().map(|r| r.head.pred.clone()).collect();
    let mut found: Vec<(usize, Collapsed)> = Vec::new();
    for (i, r) in compressed.rules.iter().enumerate() {
        if let Some(c) = collapse(r, &p.schema, registry, "sql_node", caps) {
            found.push((i, c));
        }
    }
    if found.len() > 1 {
        for (k, (i, c)) in found.iter_mut().enumerate() {
            let mut name = format!("sql_node_{k}");
            while taken.contains(&*name) {
                name.push('_');
            }
            *c = collapse(&compressed.rules[*i], &p.schema, registry, &name, caps).expect("collapsed before");
        }
    }
    let mut program = compressed.clone();
    let mut nodes = BTreeMap::new();
    for (i, c) in &found {
        program.rules[*i] = c.rule.clone();
        nodes.insert(c.node.clone(), c.query.clone());
    }
    Offload { program, nodes, collapsed: found }
}

/// Generated SQL for every offloadable rule of `pred`.
pub fn generate_sql(p: &Program, registry: &Registry, pred: &str) -> Vec<(Rule, SqlQuery)> {
    let all = |_: &str| Some(Capabilities { not_exists: true, aggregates: true });
    let compressed = compress(p);
    compressed
        .rules
        .iter()
        .filter(|r| &*r.head.pred == pred)
        .filter_map(|r| collapse(r, &p.schema, registry, "sql_node", &all).map(|c| (c.rule, c.query)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::uda::builtin_catalog;

    const SCHEMA: &str = "database({ csv::employee(NAME:char(30), SALARY:int, MANAGER:char(30)) }).\n";

    fn gen(rules: &str, pred: &str) -> Vec<(Rule, SqlQuery)> {
        let p = parse_program(&format!("{SCHEMA}{rules}")).unwrap();
        generate_sql(&p, &builtin_catalog(), pred)
    }

    #[test]
    fn expensive_employee_listing() {
        let out = gen(
            "expensive_employee(Name) <- employee(Name, Salary1, Manager), Salary1 > 75000,
                 employee(Manager, Salary2, _), Salary1 > Salary2.",
            "expensive_employee",
        );
        let (rule, q) = &out[0];
        assert_eq!(rule.to_string(), "expensive_employee(Name) <- sql_node(Name).");
        let expected = "SELECT employee_0.NAME
            FROM employee employee_0, employee employee_1
            WHERE employee_0.SALARY > 75000 AND
                  employee_1.NAME = employee_0.MANAGER AND
                  employee_0.SALARY > employee_1.SALARY";
        assert_eq!(normalize_sql(&q.to_string()), normalize_sql(expected));
    }

    #[test]
    fn negation_becomes_not_exists() {
        let out = gen("only_mgr(N) <- employee(N, _, M), ~employee(M, _, _).", "only_mgr");
        let text = normalize_sql(&out[0].1.to_string());
        assert_eq!(
            text,
            "SELECT employee_0.NAME FROM employee employee_0 WHERE NOT EXISTS (SELECT * FROM employee employee_1 WHERE employee_1.NAME = employee_0.MANAGER)"
        );
    }

    #[test]
    fn aggregate_becomes_group_by() {
        let out = gen("davg(D, avg<S>) <- employee(_, S, D).", "davg");
        let text = normalize_sql(&out[0].1.to_string());
        assert_eq!(
            text,
            "SELECT employee_0.MANAGER, AVG(employee_0.SALARY) FROM employee employee_0 GROUP BY employee_0.MANAGER"
        );
        assert_eq!(out[0].0.to_string(), "davg(D, AVG_0) <- sql_node(D, AVG_0).");
    }

    #[test]
    fn user_aggregates_stay_local() {
        let out = gen("d(M, msum<S>) <- employee(_, S, M).", "d");
        assert!(!out[0].1.has_aggregates());
        assert_eq!(out[0].0.to_string(), "d(M, msum<S>) <- sql_node(M, S).");
    }

    #[test]
    fn internal_goals_stay_residual() {
        let out = gen("boss(N, B) <- employee(N, _, B), level(B, 1).", "boss");
        assert_eq!(out[0].0.to_string(), "boss(N, B) <- sql_node(N, B), level(B, 1).");
        assert!(gen("p(X) <- level(X, 1).", "p").is_empty());
    }

    #[test]
    fn compress_unfolds_single_rule_intermediate() {
        let p = parse_program(&format!(
            "{SCHEMA}rich(N) <- employee(N, S, _), S > 75000.
             q(N) <- rich(N).
             two(N) <- two_a(N). two(N) <- two_b(N).
             r(N) <- two(N)."
        ))
        .unwrap();
        let c = compress(&p);
        assert_eq!(c.rules[1].to_string(), "q(N) <- employee(N, S_0, _), S_0 > 75000.");
        assert_eq!(c.rules[4].to_string(), "r(N) <- two(N).");
        let q = generate_sql(&p, &builtin_catalog(), "q");
        assert_eq!(
            normalize_sql(&q[0].1.to_string()),
            "SELECT employee_0.NAME FROM employee employee_0 WHERE employee_0.SALARY > 75000"
        );
    }

    #[test]
    fn aliases_are_deterministic() {
        let rules = "e2(N) <- employee(N, S, M), employee(M, S2, _), S > S2.";
        assert_eq!(gen(rules, "e2")[0].1, gen(rules, "e2")[0].1);
    }

    #[test]
    fn assignment_becomes_select_expression() {
        let out = gen("raise(N, T) <- employee(N, S, _), T = S + 100.", "raise");
        assert_eq!(normalize_sql(&out[0].1.to_string()), "SELECT employee_0.NAME, (employee_0.SALARY + 100) FROM employee employee_0");
    }
}
