//! External relations stored as CSV files. Queries are evaluated from
//! their structure; the SQL text is only used in error messages.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::{Cond, ExternalAdapter, SelectItem, SqlExpr, SqlQuery};
use crate::error::{Error, Result};
use crate::lang::{ArithOp, CmpOp, ColumnType, SchemaDecl, Source};
use crate::store::Tuple;
use crate::uda;
use crate::value::Value;

pub struct CsvAdapter {
    dir: PathBuf,
    decls: HashMap<String, SchemaDecl>,
    tables: HashMap<String, Vec<Tuple>>,
}

fn parse_cell(raw: &str, ty: ColumnType) -> Option<Value> {
    let s = raw.trim();
    match ty {
        ColumnType::Int => s.parse::<i64>().ok().map(Value::Int),
        ColumnType::Float => s.parse::<f64>().ok().map(Value::Float),
        ColumnType::String => Some(Value::sym(s)),
        ColumnType::Any => Some(
            s.parse::<i64>().map(Value::Int).or_else(|_| s.parse::<f64>().map(Value::Float)).unwrap_or_else(|_| Value::sym(s)),
        ),
    }
}

/// Rows of a CSV file with a header row, typed per `decl`.
pub fn read_table(path: &Path, decl: &SchemaDecl) -> Result<Vec<Tuple>> {
    let load = |message: String| Error::Load { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    let mut reader = ::csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| load(e.to_string()))?;
        let row = i + 1;
        if rec.len() != decl.columns.len() {
            return Err(load(format!("row {row}: expected {} columns, found {}", decl.columns.len(), rec.len())));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (cell, col) in rec.iter().zip(&decl.columns) {
            match parse_cell(cell, col.ty) {
                Some(v) => vals.push(v),
                None => {
                    return Err(load(format!("row {row}, column {}: expected {}, found '{}'", col.name, col.ty.name(), cell.trim())))
                }
            }
        }
        rows.push(Tuple::new(vals));
    }
    Ok(rows)
}

fn test(op: CmpOp, a: &Value, b: &Value) -> bool {
    match op {
        CmpOp::Eq => a.equals(b),
        CmpOp::Ne => !a.equals(b),
        CmpOp::Lt => a.compare(b) == Ordering::Less,
        CmpOp::Le => a.compare(b) != Ordering::Greater,
        CmpOp::Gt => a.compare(b) == Ordering::Greater,
        CmpOp::Ge => a.compare(b) != Ordering::Less,
    }
}

type Env<'a> = HashMap<usize, &'a Tuple>;

fn eval(e: &SqlExpr, env: &Env<'_>) -> Option<Value> {
    match e {
        SqlExpr::Col(c) => env.get(&c.alias).and_then(|t| t.values().get(c.index).cloned()),
        SqlExpr::Lit(v) => Some(v.clone()),
        SqlExpr::Neg(x) => eval(x, env)?.neg(),
        SqlExpr::Bin(op, a, b) => {
            let (a, b) = (eval(a, env)?, eval(b, env)?);
            match op {
                ArithOp::Add => a.add(&b),
                ArithOp::Sub => a.sub(&b),
                ArithOp::Mul => a.mul(&b),
                ArithOp::Div => a.div(&b),
                ArithOp::Mod => a.modulo(&b),
            }
        }
    }
}

fn expr_aliases(e: &SqlExpr, out: &mut Vec<usize>) {
    match e {
        SqlExpr::Col(c) => out.push(c.alias),
        SqlExpr::Lit(_) => {}
        SqlExpr::Neg(x) => expr_aliases(x, out),
        SqlExpr::Bin(_, a, b) => {
            expr_aliases(a, out);
            expr_aliases(b, out);
        }
    }
}

fn cond_aliases(c: &Cond, out: &mut Vec<usize>) {
    match c {
        Cond::Cmp(_, a, b) => {
            expr_aliases(a, out);
            expr_aliases(b, out);
        }
        Cond::NotExists(q) => {
            let own: Vec<usize> = q.from.iter().map(|f| f.alias).collect();
            let mut inner = Vec::new();
            q.conds.iter().for_each(|c| cond_aliases(c, &mut inner));
            out.extend(inner.into_iter().filter(|a| !own.contains(a)));
        }
    }
}

impl CsvAdapter {
    /// An adapter for the `csv` relations of `schema`. Tables are read from
    /// the `file` option of a declaration or from `<table>.csv` in `dir`.
    pub fn new(dir: impl Into<PathBuf>, schema: &[SchemaDecl]) -> CsvAdapter {
        let decls = schema
            .iter()
            .filter(|d| d.adapter() == Some("csv"))
            .map(|d| (d.pred.to_string(), d.clone()))
            .collect();
        CsvAdapter { dir: dir.into(), decls, tables: HashMap::new() }
    }

    fn path_of(&self, decl: &SchemaDecl) -> PathBuf {
        let file = match &decl.source {
            Source::External { options, .. } => options.iter().find(|(k, _)| k == "file").map(|(_, v)| v.clone()),
            Source::Internal => None,
        };
        self.dir.join(file.unwrap_or_else(|| format!("{}.csv", decl.table())))
    }

    fn load(&mut self, pred: &str) -> Result<()> {
        if self.tables.contains_key(pred) {
            return Ok(());
        }
        let Some(decl) = self.decls.get(pred) else {
            return Err(Error::Load { path: pred.to_string(), message: "relation is not served by the csv adapter".into() });
        };
        let rows = read_table(&self.path_of(decl), decl)?;
        self.tables.insert(pred.to_string(), rows);
        Ok(())
    }

    fn load_all(&mut self, q: &SqlQuery) -> Result<()> {
        for f in &q.from {
            self.load(&f.pred)?;
        }
        for c in &q.conds {
            if let Cond::NotExists(sub) = c {
                self.load_all(sub)?;
            }
        }
        Ok(())
    }

    fn holds<'a>(&'a self, c: &Cond, env: &mut Env<'a>) -> bool {
        match c {
            Cond::Cmp(op, a, b) => match (eval(a, env), eval(b, env)) {
                (Some(a), Some(b)) => test(*op, &a, &b),
                _ => false,
            },
            Cond::NotExists(q) => {
                let mut found = false;
                self.join(q, 0, env, &mut |_| {
                    found = true;
                    false
                });
                !found
            }
        }
    }

    /// Enumerate the rows of `q`'s FROM list from position `k`. The callback
    /// returns false to stop early.
    fn join<'a>(&'a self, q: &SqlQuery, k: usize, env: &mut Env<'a>, emit: &mut dyn FnMut(&Env<'a>) -> bool) -> bool {
        let own: Vec<usize> = q.from.iter().map(|f| f.alias).collect();
        let ready = |c: &Cond| {
            let mut al = Vec::new();
            cond_aliases(c, &mut al);
            let level = al.iter().filter_map(|a| own.iter().position(|o| o == a)).max();
            level.map_or(k == 0, |l| l + 1 == k)
        };
        for c in q.conds.iter().filter(|c| ready(c)) {
            if !self.holds(c, env) {
                return true;
            }
        }
        if k == q.from.len() {
            return emit(env);
        }
        let f = &q.from[k];
        for t in &self.tables[&*f.pred] {
            env.insert(f.alias, t);
            let go_on = self.join(q, k + 1, env, emit);
            env.remove(&f.alias);
            if !go_on {
                return false;
            }
        }
        true
    }

    fn run(&self, q: &SqlQuery) -> Result<Vec<Tuple>> {
        let mut rows: Vec<Vec<Value>> = Vec::new();
        let mut bad = false;
        let mut env = Env::new();
        let items: Vec<&SqlExpr> = q
            .select
            .iter()
            .map(|s| match s {
                SelectItem::Expr(e) | SelectItem::Agg { arg: e, .. } => e,
            })
            .collect();
        self.join(q, 0, &mut env, &mut |env| {
            match items.iter().map(|e| eval(e, env)).collect::<Option<Vec<_>>>() {
                Some(r) => rows.push(r),
                None => bad = true,
            }
            true
        });
        if bad {
            return Err(Error::Adapter { sql: q.to_string(), message: "expression could not be evaluated".into() });
        }
        if !q.has_aggregates() {
            let mut seen = std::collections::HashSet::new();
            return Ok(rows.into_iter().filter(|r| seen.insert(r.clone())).map(Tuple::new).collect());
        }
        let keys: Vec<usize> = (0..q.select.len()).filter(|&i| matches!(q.select[i], SelectItem::Expr(_))).collect();
        let mut groups: IndexMap<Vec<Value>, Vec<Vec<Value>>> = IndexMap::new();
        for r in rows {
            let key = keys.iter().map(|&i| r[i].clone()).collect();
            groups.entry(key).or_default().push(r);
        }
        let catalog = uda::builtin_catalog();
        let mut out = Vec::new();
        for rows in groups.values() {
            let mut vals = Vec::with_capacity(q.select.len());
            for (i, s) in q.select.iter().enumerate() {
                match s {
                    SelectItem::Expr(_) => vals.push(rows[0][i].clone()),
                    SelectItem::Agg { func, .. } => {
                        let def = catalog.lookup(func)?;
                        let items: Vec<Value> = rows.iter().map(|r| r[i].clone()).collect();
                        let (_, fin) = uda::fold(def, &items)?;
                        let Some(v) = fin.into_iter().next() else {
                            return Err(Error::Adapter { sql: q.to_string(), message: format!("{func} produced no value") });
                        };
                        vals.push(v);
                    }
                }
            }
            out.push(Tuple::new(vals));
        }
        Ok(out)
    }
}

impl ExternalAdapter for CsvAdapter {
    fn id(&self) -> &str {
        "csv"
    }

    fn execute(&mut self, q: &SqlQuery) -> Result<Box<dyn Iterator<Item = Tuple>>> {
        self.load_all(q).map_err(|e| Error::Adapter { sql: q.to_string(), message: e.to_string() })?;
        Ok(Box::new(self.run(q)?.into_iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::sqlgen::generate_sql;
    use crate::uda::builtin_catalog;

    fn setup(csv: &str, rules: &str) -> (tempfile::TempDir, crate::lang::Program) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("employee.csv"), csv).unwrap();
        let p = parse_program(&format!(
            "database({{ csv::employee(NAME:char(30), SALARY:int, MANAGER:char(30)) }}).\n{rules}"
        ))
        .unwrap();
        (dir, p)
    }

    fn run(csv: &str, rules: &str, pred: &str) -> Result<Vec<String>> {
        let (dir, p) = setup(csv, rules);
        let mut a = CsvAdapter::new(dir.path(), &p.schema);
        let (_, q) = generate_sql(&p, &builtin_catalog(), pred).remove(0);
        let mut out: Vec<String> = a.execute(&q)?.map(|t| t.to_string()).collect();
        out.sort();
        Ok(out)
    }

    const STAFF: &str = "NAME,SALARY,MANAGER\nann,90000,bob\nbob,80000,cy\ncy,100000,cy\ndee,70000,ann\n";

    #[test]
    fn join_with_comparisons() {
        let got = run(
            STAFF,
            "ee(Name) <- employee(Name, S1, M), S1 > 75000, employee(M, S2, _), S1 > S2.",
            "ee",
        )
        .unwrap();
        assert_eq!(got, ["(ann)"]);
    }

    #[test]
    fn not_exists_and_group_by() {
        let got = run(STAFF, "top(N) <- employee(N, _, M), ~employee(_, _, N).", "top").unwrap();
        assert_eq!(got, ["(dee)"]);
        let got = run(STAFF, "t(M, count<N>) <- employee(N, _, M).", "t").unwrap();
        assert_eq!(got, ["(ann, 1)", "(bob, 1)", "(cy, 2)"]);
    }

    #[test]
    fn empty_table() {
        assert!(run("NAME,SALARY,MANAGER\n", "q(N) <- employee(N, _, _).", "q").unwrap().is_empty());
        assert!(run("", "q(N) <- employee(N, _, _).", "q").unwrap().is_empty());
    }

    #[test]
    fn type_error_names_row_and_column() {
        let err = run("NAME,SALARY,MANAGER\nann,90000,bob\nbob,lots,cy\n", "q(N) <- employee(N, _, _).", "q").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2, column SALARY"), "{msg}");
        assert!(msg.contains("SELECT"), "{msg}");
    }
}
