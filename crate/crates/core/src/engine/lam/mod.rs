//! The get-tuple machine: a query form compiled to a network of AND/OR
//! nodes that yields answers one at a time.

mod producer;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

pub use producer::Producer;

use super::compile::{build, compile_rule, pattern, run_cmp, run_func, unify, unify_all, CHead, CRule, CTerm, Frame, Goal, Slot};
use super::cursor::negation_holds;
use super::eval::{materialize, EvalStats};
use super::xy::{XyOptions, XyRun};
use super::Db;
use crate::analysis::{Analysis, ComponentKind, Polarity};
use crate::error::{Error, Result};
use crate::sqlgen::{normalize_sql, Externals};
use crate::lang::{Atom, HeadArg, Literal, Rule, Term, Var};
use crate::store::{Pat, Tuple};
use crate::value::Value;

#[derive(Clone, Debug)]
pub struct LamOptions {
    /// Jump back to the goal that bound the inputs of a failed goal.
    pub backtracking: bool,
    pub trace: bool,
    pub xy: XyOptions,
}

impl Default for LamOptions {
    fn default() -> Self {
        LamOptions { backtracking: true, trace: false, xy: XyOptions::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LamStats {
    /// Calls of any node's get-tuple interface.
    pub get_tuple: u64,
    pub jumps: u64,
    pub answers: u64,
}

/// How the predicates of a program are evaluated for pipelined queries.
#[derive(Clone, Debug, Default)]
pub struct Plan {
    /// Computed eagerly into the main database before the first answer.
    pub materialized: BTreeSet<Arc<str>>,
    /// Predicate groups evaluated by lazy fixpoint producers.
    pub groups: Vec<BTreeSet<Arc<str>>>,
    /// Groups containing a choice rule; their producer is always shared.
    pub choice_groups: BTreeSet<usize>,
}

impl Plan {
    pub fn group_of(&self, pred: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(pred))
    }
}

fn closure(a: &Analysis, seeds: impl IntoIterator<Item = Arc<str>>) -> BTreeSet<Arc<str>> {
    let mut out = BTreeSet::new();
    let mut work: Vec<Arc<str>> = seeds.into_iter().collect();
    while let Some(p) = work.pop() {
        if !out.insert(p.clone()) {
            continue;
        }
        if let Some(c) = a.component_of(&p) {
            work.extend(a.components[c].preds.iter().cloned());
        }
        work.extend(a.graph.predecessors(&p).map(|e| e.from.clone()));
    }
    out.retain(|p| a.is_derived(p));
    out
}

/// Predicates reachable from `p` against the dependency edges, restricted to `within`.
fn reach(a: &Analysis, p: &str, within: &BTreeSet<Arc<str>>, up: bool) -> BTreeSet<Arc<str>> {
    let mut out = BTreeSet::new();
    let mut work = vec![Arc::<str>::from(p)];
    while let Some(q) = work.pop() {
        let next: Vec<Arc<str>> = if up {
            a.graph.predecessors(&q).map(|e| e.from.clone()).collect()
        } else {
            a.graph.successors(&q).map(|e| e.to.clone()).collect()
        };
        for n in next {
            if within.contains(&n) && out.insert(n.clone()) {
                work.push(n);
            }
        }
    }
    out
}

pub fn plan(a: &Analysis) -> Plan {
    let derived: BTreeSet<Arc<str>> = a.components.iter().flat_map(|c| c.preds.iter().cloned()).collect();
    let mut seeds: BTreeSet<Arc<str>> = BTreeSet::new();
    for c in &a.components {
        if let ComponentKind::Xy(_) = c.kind {
            seeds.extend(c.preds.iter().cloned());
        }
    }
    for e in &a.graph.edges {
        match e.polarity {
            Polarity::Negative => {
                seeds.insert(e.from.clone());
            }
            Polarity::Aggregate { monotone: false } => {
                seeds.insert(e.to.clone());
            }
            _ => {}
        }
    }
    let mut materialized = closure(a, seeds);
    loop {
        let free: BTreeSet<Arc<str>> = derived.difference(&materialized).cloned().collect();
        let mut cand: BTreeSet<Arc<str>> = BTreeSet::new();
        for c in &a.components {
            let ComponentKind::Rules { recursive } = c.kind else { continue };
            if !c.preds.iter().all(|p| free.contains(p)) {
                continue;
            }
            let rules = c.rules.iter().map(|&i| &a.program.rules[i]);
            let special = rules.clone().any(|r| r.has_choice() || r.head.has_aggregates());
            if recursive || special {
                cand.extend(c.preds.iter().cloned());
            }
        }
        let members: BTreeSet<Arc<str>> = free
            .iter()
            .filter(|p| {
                cand.contains(*p)
                    || (!reach(a, p, &cand, true).is_empty() && !reach(a, p, &cand, false).is_empty())
            })
            .cloned()
            .collect();
        let mut groups: Vec<BTreeSet<Arc<str>>> = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &members {
            if seen.contains(p) {
                continue;
            }
            let mut g = BTreeSet::new();
            let mut work = vec![p.clone()];
            while let Some(q) = work.pop() {
                if !g.insert(q.clone()) {
                    continue;
                }
                let near = a.graph.predecessors(&q).map(|e| e.from.clone()).chain(a.graph.successors(&q).map(|e| e.to.clone()));
                work.extend(near.filter(|n| members.contains(n)).collect::<Vec<_>>());
            }
            seen.extend(g.iter().cloned());
            groups.push(g);
        }
        // Producers read their non-group inputs from the main database.
        let mut extra = BTreeSet::new();
        for g in &groups {
            for r in a.program.rules.iter().filter(|r| g.contains(&r.head.pred)) {
                for b in r.body_preds() {
                    if derived.contains(b) && !g.contains(b) && !materialized.contains(b) {
                        extra.insert(b.clone());
                    }
                }
            }
        }
        if extra.is_empty() {
            let choice_groups = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| a.program.rules.iter().any(|r| g.contains(&r.head.pred) && r.has_choice()))
                .map(|(i, _)| i)
                .collect();
            return Plan { materialized, groups, choice_groups };
        }
        materialized.extend(closure(a, extra));
    }
}

enum Kind {
    Root { child: usize, query: CRule, frame: Frame, seen: HashSet<Tuple>, started: bool, done: bool },
    Or { children: Vec<usize>, active: usize, input: Vec<Pat>, seen: HashSet<Tuple> },
    And { rule: CRule, children: Vec<Child>, frame: Frame, marks: Vec<usize> },
    Scan { pred: Arc<str>, pos: Vec<usize>, i: usize },
    Consumer { producer: usize, pred: Arc<str>, pat: Vec<Pat>, pending: std::collections::VecDeque<usize>, scanned: usize },
    /// Rows of an offloaded query, fetched on entry with the bound arguments pushed down.
    Sql { pred: Arc<str>, rows: Vec<Tuple>, i: usize },
    /// A built-in goal run inside its AND node.
    Builtin,
    Taken,
}

struct Node {
    label: String,
    kind: Kind,
}

struct Child {
    id: usize,
    goal: usize,
    state: ChildState,
}

enum ChildState {
    Call { node: usize },
    Once { tried: bool },
    Values { vals: Vec<Value>, i: usize },
}

/// A compiled query form with its evaluation state.
pub struct Lam {
    nodes: Vec<Node>,
    root: usize,
    plan: Plan,
    producers: Vec<Producer>,
    opts: LamOptions,
    ready: bool,
    pub stats: LamStats,
    pub eval_stats: EvalStats,
    pub xy_runs: Vec<XyRun>,
    trace: Vec<String>,
}

fn show_pat(p: &[Pat]) -> String {
    let parts: Vec<String> = p.iter().map(|x| if let Pat::Bound(v) = x { v.to_string() } else { "_".into() }).collect();
    format!("({})", parts.join(", "))
}

fn slots_bound_before(cr: &CRule, prebound: &BTreeSet<Var>, k: usize) -> BTreeSet<Slot> {
    let mut out: BTreeSet<Slot> =
        cr.names.iter().enumerate().filter(|(_, v)| prebound.contains(*v)).map(|(i, _)| i as Slot).collect();
    for p in &cr.produces[..k] {
        out.extend(p.iter().copied());
    }
    out
}

fn term_ground(t: &CTerm, bound: &BTreeSet<Slot>) -> bool {
    match t {
        CTerm::Slot(s) | CTerm::Succ(s, _) => bound.contains(s),
        CTerm::Const(_) => true,
        CTerm::Compound(_, args) => args.iter().all(|a| term_ground(a, bound)),
        CTerm::Any => false,
    }
}

/// What a get-tuple call can read.
struct Cx<'a> {
    db: &'a Db,
    ext: Option<&'a mut Externals>,
}

struct Builder<'a> {
    a: &'a Analysis,
    ext: Option<&'a Externals>,
    plan: &'a Plan,
    nodes: Vec<Node>,
    producers: Vec<Producer>,
    shared: BTreeMap<usize, usize>,
}

impl Builder<'_> {
    fn push(&mut self, label: String, kind: Kind) -> usize {
        self.nodes.push(Node { label, kind });
        self.nodes.len() - 1
    }

    fn producer(&mut self, g: usize, bound: bool) -> Result<usize> {
        if !bound || self.plan.choice_groups.contains(&g) {
            if let Some(&p) = self.shared.get(&g) {
                return Ok(p);
            }
        }
        let preds = self.plan.groups[g].clone();
        let rules = self
            .a
            .program
            .rules
            .iter()
            .filter(|r| preds.contains(&r.head.pred))
            .map(|r| compile_rule(r, &self.a.registry, &BTreeSet::new()))
            .collect::<Result<Vec<_>>>()?;
        self.producers.push(Producer::new(g, preds, rules));
        let id = self.producers.len() - 1;
        if !bound || self.plan.choice_groups.contains(&g) {
            self.shared.insert(g, id);
        }
        Ok(id)
    }

    /// A node answering calls to `pred` with the given positions bound.
    fn call_node(&mut self, pred: &Arc<str>, bound: &[bool]) -> Result<usize> {
        if !self.a.arity.contains_key(pred) {
            return Err(Error::UnknownPredicate(pred.to_string()));
        }
        if let Some(q) = self.ext.and_then(|e| e.nodes.get(pred)) {
            let label = format!("sql {pred}: {}", normalize_sql(&q.to_string()));
            return Ok(self.push(label, Kind::Sql { pred: pred.clone(), rows: Vec::new(), i: 0 }));
        }
        if !self.a.is_derived(pred) || self.plan.materialized.contains(pred) {
            return Ok(self.push(format!("scan {pred}"), Kind::Scan { pred: pred.clone(), pos: Vec::new(), i: 0 }));
        }
        if let Some(g) = self.plan.group_of(pred) {
            let p = self.producer(g, bound.iter().any(|b| *b))?;
            let kind = Kind::Consumer {
                producer: p,
                pred: pred.clone(),
                pat: Vec::new(),
                pending: Default::default(),
                scanned: 0,
            };
            return Ok(self.push(format!("consume {pred} from producer {p}"), kind));
        }
        let or = self.push(format!("or {pred}"), Kind::Taken);
        let rules: Vec<Rule> = self.a.rules_for(pred).cloned().collect();
        let mut children = Vec::new();
        for r in &rules {
            children.push(self.and_node(r, bound)?);
        }
        self.nodes[or].kind = Kind::Or { children, active: 0, input: Vec::new(), seen: HashSet::new() };
        Ok(or)
    }

    fn and_node(&mut self, r: &Rule, bound: &[bool]) -> Result<usize> {
        let mut prebound = BTreeSet::new();
        for (arg, b) in r.head.args.iter().zip(bound) {
            if let (HeadArg::Term(t), true) = (arg, b) {
                prebound.extend(t.vars());
            }
        }
        let cr = compile_rule(r, &self.a.registry, &prebound)?;
        let id = self.push(format!("and {r}"), Kind::Taken);
        let mut children = Vec::new();
        for (gi, g) in cr.goals.iter().enumerate() {
            let child = match g {
                Goal::Atom { pred, args } => {
                    let b = slots_bound_before(&cr, &prebound, gi);
                    let mask: Vec<bool> = args.iter().map(|t| term_ground(t, &b)).collect();
                    let node = self.call_node(pred, &mask)?;
                    Child { id: node, goal: gi, state: ChildState::Call { node } }
                }
                Goal::Func { .. } => {
                    let n = self.push(format!("func {}", cr.goal_text[gi]), Kind::Builtin);
                    Child { id: n, goal: gi, state: ChildState::Values { vals: Vec::new(), i: 0 } }
                }
                Goal::Not { .. } | Goal::Cmp { .. } => {
                    let n = self.push(format!("test {}", cr.goal_text[gi]), Kind::Builtin);
                    Child { id: n, goal: gi, state: ChildState::Once { tried: false } }
                }
            };
            children.push(child);
        }
        let frame = Frame::new(cr.nslots);
        let marks = vec![0; children.len()];
        self.nodes[id].kind = Kind::And { rule: cr, children, frame, marks };
        Ok(id)
    }
}

fn root_query(a: &Analysis, query: &Atom) -> Result<CRule> {
    let vars: Vec<Term> = query.vars().into_iter().map(Term::Var).collect();
    let qr = Rule::new(Atom::new("?", vars), vec![Literal::pos(query.clone())]);
    compile_rule(&qr, &a.registry, &BTreeSet::new())
}

/// `b` for each ground argument of `query`, `f` for the others.
pub fn adornment(query: &Atom) -> String {
    query.args.iter().map(|t| if t.vars().is_empty() { 'b' } else { 'f' }).collect()
}

/// Compile a query atom into a machine over `a`.
pub fn compile_query_form(a: &Analysis, query: &Atom, opts: &LamOptions, ext: Option<&Externals>) -> Result<Lam> {
    if !a.arity.contains_key(&query.pred) {
        return Err(Error::UnknownPredicate(query.pred.to_string()));
    }
    let qc = root_query(a, query)?;
    let Goal::Atom { args, .. } = &qc.goals[0] else { unreachable!("query goal is an atom") };
    let mask: Vec<bool> = args.iter().map(|t| term_ground(t, &BTreeSet::new())).collect();
    let plan = plan(a);
    let mut b = Builder { a, ext, plan: &plan, nodes: Vec::new(), producers: Vec::new(), shared: BTreeMap::new() };
    let root = b.push(format!("root {query}"), Kind::Taken);
    let child = b.call_node(&query.pred, &mask)?;
    let frame = Frame::new(qc.nslots);
    b.nodes[root].kind = Kind::Root { child, query: qc, frame, seen: HashSet::new(), started: false, done: false };
    let (nodes, producers) = (b.nodes, b.producers);
    Ok(Lam {
        nodes,
        root,
        plan,
        producers,
        opts: opts.clone(),
        ready: false,
        stats: LamStats::default(),
        eval_stats: EvalStats::default(),
        xy_runs: Vec::new(),
        trace: Vec::new(),
    })
}

impl Lam {
    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn options(&self) -> &LamOptions {
        &self.opts
    }

    pub fn set_trace(&mut self, on: bool) {
        self.opts.trace = on;
    }

    /// Drain the trace lines recorded so far.
    pub fn take_trace(&mut self) -> Vec<String> {
        std::mem::take(&mut self.trace)
    }

    /// New recursive tuples per predicate, summed over producers.
    pub fn extensions(&self) -> BTreeMap<Arc<str>, u64> {
        let mut out = BTreeMap::new();
        for p in &self.producers {
            for (k, v) in &p.extensions {
                *out.entry(k.clone()).or_insert(0) += v;
            }
        }
        out
    }

    pub fn producers(&self) -> &[Producer] {
        &self.producers
    }

    /// Use the machine for another query with the same adornment.
    pub fn rebind(&mut self, a: &Analysis, query: &Atom) -> Result<()> {
        let qc = root_query(a, query)?;
        if let Kind::Root { query: q, frame, .. } = &mut self.nodes[self.root].kind {
            *frame = Frame::new(qc.nslots);
            *q = qc;
        }
        self.nodes[self.root].label = format!("root {query}");
        self.reset();
        Ok(())
    }

    /// Restart answer enumeration. Producers keep what they derived.
    pub fn reset(&mut self) {
        if let Kind::Root { seen, started, done, frame, .. } = &mut self.nodes[self.root].kind {
            seen.clear();
            *started = false;
            *done = false;
            frame.reset();
        }
    }

    /// The node network as an indented tree.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        self.describe_node(self.root, 0, &mut out);
        out
    }

    fn describe_node(&self, id: usize, depth: usize, out: &mut String) {
        let _ = writeln!(out, "{}n{} {}", "  ".repeat(depth), id, self.nodes[id].label);
        match &self.nodes[id].kind {
            Kind::Root { child, .. } => self.describe_node(*child, depth + 1, out),
            Kind::Or { children, .. } => children.iter().for_each(|&c| self.describe_node(c, depth + 1, out)),
            Kind::And { children, .. } => children.iter().for_each(|c| self.describe_node(c.id, depth + 1, out)),
            _ => {}
        }
    }

    fn note(&mut self, id: usize, point: &str, detail: &str) {
        if self.opts.trace {
            let line = format!("n{id} {} {point} {detail}", self.nodes[id].label);
            self.trace.push(line.trim_end().to_string());
        }
    }

    /// The next answer of the query, as the values of the query atom's arguments.
    pub fn next_answer(
        &mut self,
        a: &Analysis,
        db: &mut Db,
        done: &mut BTreeSet<usize>,
        mut ext: Option<&mut Externals>,
    ) -> Result<Option<Tuple>> {
        if !self.ready {
            // Rules evaluated outside the node network read SQL nodes from the database.
            if let Some(ext) = ext.as_deref_mut() {
                let readers: BTreeSet<&Arc<str>> = self.plan.materialized.iter().chain(self.plan.groups.iter().flatten()).collect();
                let nodes: Vec<Arc<str>> = ext.nodes.keys().cloned().collect();
                for node in nodes {
                    let read = a.program.rules.iter().any(|r| readers.contains(&r.head.pred) && r.body_preds().any(|p| *p == node));
                    if read && db.len_of(&node) == 0 {
                        for t in ext.fetch(&node, &[])? {
                            db.insert(&node, t)?;
                        }
                    }
                }
            }
            let targets: Vec<Arc<str>> = self.plan.materialized.iter().cloned().collect();
            let runs = materialize(a, db, targets.iter().map(|p| &**p), done, &self.opts.xy, &mut self.eval_stats)?;
            self.xy_runs.extend(runs);
            self.ready = true;
        }
        let mut cx = Cx { db, ext };
        let root = self.root;
        let Kind::Root { child, .. } = self.nodes[root].kind else { unreachable!("root") };
        loop {
            let (entry, finished) = match &self.nodes[root].kind {
                Kind::Root { started, done, .. } => (!*started, *done),
                _ => unreachable!("root"),
            };
            if finished {
                return Ok(None);
            }
            self.stats.get_tuple += 1;
            let input = if entry {
                let Kind::Root { query, frame, started, .. } = &mut self.nodes[root].kind else { unreachable!() };
                *started = true;
                let Goal::Atom { args, .. } = &query.goals[0] else { unreachable!() };
                Some(pattern(args, frame))
            } else {
                None
            };
            let got = self.call(child, input, &mut cx)?;
            let Kind::Root { query, frame, seen, done, .. } = &mut self.nodes[root].kind else { unreachable!() };
            let Some(t) = got else {
                *done = true;
                self.note(root, "f-dest", "");
                return Ok(None);
            };
            frame.reset();
            let Goal::Atom { args, .. } = &query.goals[0] else { unreachable!() };
            let fresh = unify_all(args, &t, frame) && seen.insert(t.clone());
            if !fresh {
                continue;
            }
            self.stats.answers += 1;
            self.note(root, "s-dest", &t.to_string());
            return Ok(Some(t));
        }
    }

    /// One get-tuple call: `Some(input)` enters the node, `None` asks it for
    /// its next tuple.
    fn call(&mut self, id: usize, input: Option<Vec<Pat>>, cx: &mut Cx<'_>) -> Result<Option<Tuple>> {
        self.stats.get_tuple += 1;
        match &input {
            Some(p) => self.note(id, "e-dest", &show_pat(p)),
            None => self.note(id, "b-dest", ""),
        }
        let mut kind = std::mem::replace(&mut self.nodes[id].kind, Kind::Taken);
        let out = match &mut kind {
            Kind::Or { children, active, input: saved, seen } => {
                let mut entering = input.is_some();
                if let Some(p) = input {
                    *saved = p;
                    *active = 0;
                    seen.clear();
                }
                loop {
                    if *active >= children.len() {
                        break Ok(None);
                    }
                    let arg = entering.then(|| saved.clone());
                    match self.call(children[*active], arg, cx) {
                        Err(e) => break Err(e),
                        Ok(Some(t)) => {
                            if seen.insert(t.clone()) {
                                break Ok(Some(t));
                            }
                            entering = false;
                        }
                        Ok(None) => {
                            *active += 1;
                            entering = true;
                        }
                    }
                }
            }
            Kind::And { rule, children, frame, marks } => self.and_call(id, rule, children, frame, marks, input, cx),
            Kind::Scan { pred, pos, i } => {
                if let Some(p) = &input {
                    *pos = cx.db.get(pred).map(|r| r.matching_positions(p, 0..r.len())).unwrap_or_default();
                    *i = 0;
                }
                let t = pos.get(*i).and_then(|&n| cx.db.get(pred).and_then(|r| r.get(n)).cloned());
                *i += 1;
                Ok(t)
            }
            Kind::Consumer { producer, pred, pat, pending, scanned } => {
                if let Some(p) = input {
                    *pat = p;
                    pending.clear();
                    *scanned = 0;
                }
                let prod = &mut self.producers[*producer];
                loop {
                    if let Some(n) = pending.pop_front() {
                        let t = prod.relation(pred).and_then(|r| r.get(n)).cloned();
                        break Ok(t);
                    }
                    let len = prod.relation(pred).map_or(0, |r| r.len());
                    if *scanned < len {
                        let rel = prod.relation(pred).expect("group relation");
                        pending.extend(rel.matching_positions(pat, *scanned..len));
                        *scanned = len;
                        continue;
                    }
                    if prod.fixpoint {
                        break Ok(None);
                    }
                    if let Err(e) = prod.step(pred, cx.db) {
                        break Err(e);
                    }
                }
            }
            Kind::Sql { pred, rows, i } => {
                let mut res = Ok(());
                if let Some(p) = &input {
                    let bound: Vec<(usize, Value)> = p
                        .iter()
                        .enumerate()
                        .filter_map(|(k, x)| if let Pat::Bound(v) = x { Some((k, v.clone())) } else { None })
                        .collect();
                    *i = 0;
                    match cx.ext.as_deref_mut() {
                        Some(ext) => match ext.fetch(pred, &bound) {
                            Ok(r) => *rows = r,
                            Err(e) => res = Err(e),
                        },
                        None => *rows = cx.db.get(pred).map(|r| r.scan(p)).unwrap_or_default(),
                    }
                }
                res.map(|()| {
                    let t = rows.get(*i).cloned();
                    *i += 1;
                    t
                })
            }
            Kind::Root { .. } | Kind::Builtin | Kind::Taken => unreachable!("not callable"),
        };
        self.nodes[id].kind = kind;
        let out = out?;
        match &out {
            Some(t) => self.note(id, "s-dest", &t.to_string()),
            None => self.note(id, "f-dest", ""),
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn and_call(
        &mut self,
        id: usize,
        rule: &CRule,
        children: &mut [Child],
        frame: &mut Frame,
        marks: &mut [usize],
        input: Option<Vec<Pat>>,
        cx: &mut Cx<'_>,
    ) -> Result<Option<Tuple>> {
        let n = children.len();
        let (mut k, mut entering) = match input {
            Some(p) => {
                frame.reset();
                for (h, x) in rule.head.iter().zip(&p) {
                    if let (CHead::Term(t), Pat::Bound(v)) = (h, x) {
                        if !unify(t, v, frame) {
                            return Ok(None);
                        }
                    }
                }
                if n == 0 {
                    return Ok(head_tuple(rule, frame));
                }
                (0, true)
            }
            None => {
                if n == 0 {
                    return Ok(None);
                }
                (n - 1, false)
            }
        };
        loop {
            if entering {
                marks[k] = frame.mark();
            }
            let ok = self.child_next(rule, &mut children[k], frame, marks[k], entering, cx)?;
            if ok {
                if k + 1 == n {
                    return Ok(head_tuple(rule, frame));
                }
                k += 1;
                entering = true;
                continue;
            }
            frame.undo(marks[k]);
            if entering && self.opts.backtracking {
                let need = &rule.consumes[k];
                let target = (0..k).rev().find(|&j| rule.produces[j].iter().any(|s| need.contains(s)));
                let Some(j) = target else {
                    if k > 0 {
                        self.stats.jumps += 1;
                        let detail = format!("from {} out of the rule", rule.goal_text[k]);
                        self.note(id, "jump", &detail);
                    }
                    return Ok(None);
                };
                if j + 1 < k {
                    self.stats.jumps += 1;
                    let detail = format!("from {} to {}", rule.goal_text[k], rule.goal_text[j]);
                    self.note(id, "jump", &detail);
                    frame.undo(marks[j + 1]);
                }
                k = j;
                entering = false;
                continue;
            }
            if k == 0 {
                return Ok(None);
            }
            k -= 1;
            entering = false;
        }
    }

    /// Enter or retry one child of an AND node; true when it bound a solution.
    fn child_next(&mut self, rule: &CRule, c: &mut Child, frame: &mut Frame, mark: usize, entering: bool, cx: &mut Cx<'_>) -> Result<bool> {
        frame.undo(mark);
        let goal = &rule.goals[c.goal];
        match (&mut c.state, goal) {
            (ChildState::Call { node }, Goal::Atom { args, .. }) => {
                let mut input = entering.then(|| pattern(args, frame));
                loop {
                    match self.call(*node, input.take(), cx)? {
                        None => return Ok(false),
                        Some(t) => {
                            if unify_all(args, &t, frame) {
                                return Ok(true);
                            }
                            frame.undo(mark);
                        }
                    }
                }
            }
            (ChildState::Once { tried }, _) => {
                self.stats.get_tuple += 1;
                if entering {
                    *tried = false;
                }
                if *tried {
                    self.note(c.id, "b-dest", "");
                    self.note(c.id, "f-dest", "");
                    return Ok(false);
                }
                *tried = true;
                self.note(c.id, "e-dest", "");
                let ok = match goal {
                    Goal::Not { pred, args } => negation_holds(cx.db.get(pred), args, frame),
                    Goal::Cmp { op, lhs, rhs } => run_cmp(*op, lhs, rhs, frame),
                    _ => false,
                };
                self.note(c.id, if ok { "s-dest" } else { "f-dest" }, "");
                Ok(ok)
            }
            (ChildState::Values { vals, i }, Goal::Func { kind, def, inputs, out }) => {
                self.stats.get_tuple += 1;
                if entering {
                    *vals = run_func(*kind, def, inputs, frame);
                    *i = 0;
                }
                while *i < vals.len() {
                    let v = vals[*i].clone();
                    *i += 1;
                    if unify(out, &v, frame) {
                        self.note(c.id, "s-dest", &v.to_string());
                        return Ok(true);
                    }
                    frame.undo(mark);
                }
                self.note(c.id, "f-dest", "");
                Ok(false)
            }
            _ => unreachable!("child state follows goal kind"),
        }
    }
}

fn head_tuple(rule: &CRule, frame: &Frame) -> Option<Tuple> {
    rule.head
        .iter()
        .map(|h| match h {
            CHead::Term(t) => build(t, frame),
            CHead::Agg { .. } => None,
        })
        .collect::<Option<Vec<Value>>>()
        .map(Tuple::new)
}

/// Every answer of `query`, in production order.
pub fn answers(
    a: &Analysis,
    db: &mut Db,
    query: &Atom,
    opts: &LamOptions,
    mut ext: Option<&mut Externals>,
) -> Result<(Vec<Tuple>, Lam)> {
    let mut lam = compile_query_form(a, query, opts, ext.as_deref())?;
    let mut done = BTreeSet::new();
    let mut out = Vec::new();
    while let Some(t) = lam.next_answer(a, db, &mut done, ext.as_deref_mut())? {
        out.push(t);
    }
    Ok((out, lam))
}
