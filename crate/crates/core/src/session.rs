//! A loaded program with its database, compiled query forms and options.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::analysis::{self, analyze, Analysis};
use crate::engine::lam::{self, compile_query_form, Lam, LamOptions};
use crate::engine::{load_base_facts, materialize, Db, EvalStats, XyOptions};
use crate::error::{Diagnostic, Error, Result};
use crate::lang::{parse_atom, parse_program, Atom, Program};
use crate::sqlgen::{self, CsvAdapter, Externals, SqlQuery};
use crate::store::Tuple;

#[derive(Clone, Debug)]
pub struct SessionOptions {
    /// Shuffle base facts with this seed before loading them.
    pub seed: Option<u64>,
    pub max_steps: usize,
    pub offload: bool,
    pub trace: bool,
    pub backtracking: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { seed: None, max_steps: XyOptions::default().max_steps, offload: true, trace: false, backtracking: true }
    }
}

struct Loaded {
    /// Analysis of the program as written, used by `explain`.
    source: Analysis,
    /// Analysis of the program that runs, with external goals offloaded.
    exec: Analysis,
    db: Db,
    done: BTreeSet<usize>,
    ext: Externals,
}

pub struct Session {
    opts: SessionOptions,
    program: Program,
    dir: PathBuf,
    loaded: Option<Loaded>,
    forms: BTreeMap<(Arc<str>, String), Lam>,
}

fn no_program() -> Error {
    Error::Analysis(vec![Diagnostic::new(None, "no program loaded")])
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Load { path: path.display().to_string(), message: e.to_string() })
}

impl Default for Session {
    fn default() -> Self {
        Session::new(SessionOptions::default())
    }
}

impl Session {
    pub fn new(opts: SessionOptions) -> Session {
        Session { opts, program: Program::default(), dir: PathBuf::from("."), loaded: None, forms: BTreeMap::new() }
    }

    pub fn options(&self) -> &SessionOptions {
        &self.opts
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Analysis of the loaded program as written.
    pub fn analysis(&self) -> Option<&Analysis> {
        self.loaded.as_ref().map(|l| &l.source)
    }

    /// Analysis of the program that is evaluated.
    pub fn exec_analysis(&self) -> Option<&Analysis> {
        self.loaded.as_ref().map(|l| &l.exec)
    }

    pub fn externals(&self) -> Option<&Externals> {
        self.loaded.as_ref().map(|l| &l.ext)
    }

    /// Load rules and facts from a file. CSV tables are looked up next to it.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = read(path)?;
        self.load_source(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Load a schema file. Same syntax as a program file.
    pub fn schema_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.load_file(path)
    }

    /// Add program text. On any error the session keeps its previous program.
    pub fn load_source(&mut self, text: &str, dir: &Path) -> Result<()> {
        let extra = parse_program(text)?;
        let before = (self.program.clone(), self.dir.clone());
        self.program.extend(extra);
        self.dir = dir.to_path_buf();
        if let Err(e) = self.program.arities().and_then(|_| self.rebuild()) {
            (self.program, self.dir) = before;
            if !self.program.is_empty() {
                self.rebuild()?;
            }
            return Err(e);
        }
        Ok(())
    }

    fn xy(&self) -> XyOptions {
        XyOptions { max_steps: self.opts.max_steps, ..XyOptions::default() }
    }

    fn lam_options(&self) -> LamOptions {
        LamOptions { backtracking: self.opts.backtracking, trace: self.opts.trace, xy: self.xy() }
    }

    /// Re-analyze and reload the database from scratch.
    fn rebuild(&mut self) -> Result<()> {
        self.forms.clear();
        self.loaded = None;
        let source = analyze(&self.program)?;
        let mut ext = Externals::default();
        ext.adapters.push(Box::new(CsvAdapter::new(&self.dir, &self.program.schema)));
        let exec = if self.opts.offload {
            let off = sqlgen::offload(&self.program, &source.registry, &|id| ext.capabilities(id));
            ext.nodes = off.nodes;
            analyze(&off.program)?
        } else {
            source.clone()
        };
        let mut db = Db::new();
        load_base_facts(&exec, &mut db, self.opts.seed)?;
        let read: BTreeSet<&Arc<str>> = exec.program.rules.iter().flat_map(|r| r.body_preds()).collect();
        for decl in self.program.schema.iter().filter(|d| d.is_external() && read.contains(&d.pred)) {
            for t in ext.run(&SqlQuery::scan(decl))? {
                db.insert(&decl.pred, t)?;
            }
        }
        self.loaded = Some(Loaded { source, exec, db, done: BTreeSet::new(), ext });
        Ok(())
    }

    /// Change an option by name. Options that affect evaluation reload the database.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let bad = || Error::Analysis(vec![Diagnostic::new(None, format!("invalid value {value:?} for option {name}"))]);
        let flag = || match value {
            "on" | "true" | "1" => Ok(true),
            "off" | "false" | "0" => Ok(false),
            _ => Err(bad()),
        };
        match name {
            "seed" => self.opts.seed = if value == "none" { None } else { Some(value.parse().map_err(|_| bad())?) },
            "max_steps" | "max-steps" => self.opts.max_steps = value.parse().map_err(|_| bad())?,
            "offload" => self.opts.offload = flag()?,
            "trace" => {
                self.opts.trace = flag()?;
                let on = self.opts.trace;
                self.forms.values_mut().for_each(|f| f.set_trace(on));
                return Ok(());
            }
            "backtracking" => self.opts.backtracking = flag()?,
            _ => return Err(Error::Analysis(vec![Diagnostic::new(None, format!("unknown option {name}"))])),
        }
        if self.loaded.is_some() {
            self.rebuild()?;
        }
        Ok(())
    }

    fn form(&mut self, query: &Atom) -> Result<&mut Lam> {
        let opts = self.lam_options();
        let loaded = self.loaded.as_ref().ok_or_else(no_program)?;
        let key = (query.pred.clone(), lam::adornment(query));
        if !self.forms.contains_key(&key) {
            let form = compile_query_form(&loaded.exec, query, &opts, Some(&loaded.ext))?;
            self.forms.insert(key.clone(), form);
        }
        let form = self.forms.get_mut(&key).expect("inserted");
        form.rebind(&loaded.exec, query)?;
        Ok(form)
    }

    /// Start answering a query. Answers are produced one per pull.
    pub fn query(&mut self, query: &Atom) -> Result<Answers<'_>> {
        self.form(query)?;
        Ok(Answers { session: self, key: (query.pred.clone(), lam::adornment(query)), count: 0, finished: false })
    }

    /// Parse a query atom and start answering it.
    pub fn query_str(&mut self, text: &str) -> Result<Answers<'_>> {
        let q = parse_atom(text)?;
        self.query(&q)
    }

    /// Every answer of a query, in production order.
    pub fn answers(&mut self, text: &str) -> Result<Vec<Tuple>> {
        self.query_str(text)?.collect()
    }

    /// The compiled form for a query, if it was issued before.
    pub fn compiled(&self, query: &Atom) -> Option<&Lam> {
        self.forms.get(&(query.pred.clone(), lam::adornment(query)))
    }

    /// The full relation of `pred`, evaluated bottom-up, sorted.
    pub fn facts(&mut self, pred: &str) -> Result<Vec<Tuple>> {
        let xy = self.xy();
        let l = self.loaded.as_mut().ok_or_else(no_program)?;
        if !l.exec.arity.contains_key(pred) {
            return Err(Error::UnknownPredicate(pred.to_string()));
        }
        let nodes: Vec<Arc<str>> = l.ext.nodes.keys().cloned().collect();
        for node in nodes {
            if l.db.len_of(&node) == 0 {
                for t in l.ext.fetch(&node, &[])? {
                    l.db.insert(&node, t)?;
                }
            }
        }
        materialize(&l.exec, &mut l.db, [pred], &mut l.done, &xy, &mut EvalStats::default())?;
        Ok(l.db.sorted(pred))
    }

    /// Trace lines collected since the last call.
    pub fn take_trace(&mut self) -> Vec<String> {
        self.forms.values_mut().flat_map(|f| f.take_trace()).collect()
    }

    /// `strata`, `foe`, `bistate`, `syncbi`, `sql` or `plan`, with a
    /// predicate (or a query atom for `plan`) where needed.
    pub fn explain(&mut self, what: &str, arg: Option<&str>) -> Result<String> {
        let l = self.loaded.as_ref().ok_or_else(no_program)?;
        let need = || {
            arg.map(|s| s.trim().trim_end_matches('.').trim())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Analysis(vec![Diagnostic::new(None, format!("explain {what} needs a predicate"))]))
        };
        let known = |p: &str| {
            if l.source.arity.contains_key(p) {
                Ok(p.to_string())
            } else {
                Err(Error::UnknownPredicate(p.to_string()))
            }
        };
        match what {
            "strata" => Ok(analysis::explain_strata(&l.source)),
            "foe" => analysis::explain_foe(&l.source, &known(need()?)?),
            "bistate" => analysis::explain_bistate(&l.source, &known(need()?)?),
            "syncbi" => analysis::explain_syncbi(&l.source, &known(need()?)?),
            "sql" => {
                let p = known(need()?)?;
                let mut out = String::new();
                for (rule, q) in sqlgen::generate_sql(&self.program, &l.source.registry, &p) {
                    let _ = writeln!(out, "{rule}\n{q}\n");
                }
                if out.is_empty() {
                    out = format!("no rule of {p} reads external relations\n");
                }
                Ok(out)
            }
            "plan" => {
                let q = parse_atom(need()?)?;
                Ok(self.form(&q)?.describe())
            }
            _ => Err(Error::Analysis(vec![Diagnostic::new(None, format!("unknown explain target {what}"))])),
        }
    }
}

/// Answers of one query, pulled one at a time. Dropping it early leaves the
/// session usable; issuing the query again starts over.
pub struct Answers<'s> {
    session: &'s mut Session,
    key: (Arc<str>, String),
    count: usize,
    finished: bool,
}

impl Answers<'_> {
    /// Answers produced so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// The query form being run.
    pub fn form(&self) -> &Lam {
        &self.session.forms[&self.key]
    }
}

impl Iterator for Answers<'_> {
    type Item = Result<Tuple>;

    fn next(&mut self) -> Option<Result<Tuple>> {
        if self.finished {
            return None;
        }
        let s = &mut *self.session;
        let l = s.loaded.as_mut()?;
        let form = s.forms.get_mut(&self.key)?;
        let got = form.next_answer(&l.exec, &mut l.db, &mut l.done, Some(&mut l.ext));
        match got {
            Ok(Some(t)) => {
                self.count += 1;
                Some(Ok(t))
            }
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}
