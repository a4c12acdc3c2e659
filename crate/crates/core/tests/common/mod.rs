//! Fixture access and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ldl_core::lang::{parse_program, print_program};
use ldl_core::session::{Session, SessionOptions};
use rand::Rng;

pub fn fixtures() -> PathBuf {
    std::env::var_os("LDL_FIXTURES")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"))
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Program text of a fixture with the facts of `drop` replaced by `extra`.
pub fn with_facts(name: &str, drop: &[&str], extra: &str) -> String {
    let mut p = parse_program(&read_fixture(name)).unwrap();
    p.facts.retain(|f| !drop.contains(&&*f.pred));
    format!("{}\n{extra}", print_program(&p))
}

pub fn session_for(text: &str, opts: SessionOptions) -> Session {
    let mut s = Session::new(opts);
    s.load_source(text, &fixtures()).unwrap_or_else(|e| panic!("{e}\n{text}"));
    s
}

pub fn seeded(seed: u64) -> SessionOptions {
    SessionOptions { seed: Some(seed), ..SessionOptions::default() }
}

/// Rows of `pred` printed as tuples, as a set.
pub fn facts_of(s: &mut Session, pred: &str) -> BTreeSet<String> {
    s.facts(pred).unwrap().iter().map(|t| t.to_string()).collect()
}

/// Answers of the all-variables query on `pred`, as a set.
pub fn answers_of(s: &mut Session, pred: &str) -> BTreeSet<String> {
    let n = s.exec_analysis().unwrap().arity[pred];
    let vars: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let q = if n == 0 { pred.to_string() } else { format!("{pred}({})", vars.join(", ")) };
    let got = s.answers(&q).unwrap();
    let set: BTreeSet<String> = got.iter().map(|t| t.to_string()).collect();
    assert_eq!(set.len(), got.len(), "{q} repeated an answer");
    set
}

/// Derived predicates of the loaded program that survive analysis.
pub fn derived_preds(s: &Session) -> Vec<String> {
    let arity = &s.exec_analysis().unwrap().arity;
    s.program().derived_preds().iter().filter(|p| arity.contains_key(*p)).map(|p| p.to_string()).collect()
}

pub fn tuple(parts: &[String]) -> String {
    format!("({})", parts.join(", "))
}

/// Choice models of the spanning-tree program: sets C of arcs such that
/// C is exactly the set of candidate arcs reachable from `a` through C
/// whose target was not chosen with another source.
pub fn spanning_tree_models(arcs: &[(String, String)]) -> Vec<BTreeSet<(String, String)>> {
    let cand: Vec<(String, String)> = arcs.iter().filter(|(x, y)| y != "a" && x != y).cloned().collect();
    let mut models = Vec::new();
    for mask in 0u32..(1 << cand.len()) {
        let c: BTreeSet<(String, String)> = (0..cand.len()).filter(|i| mask & (1 << i) != 0).map(|i| cand[i].clone()).collect();
        let mut reached: BTreeSet<String> = ["a".to_string()].into();
        loop {
            let more: Vec<String> = c.iter().filter(|(x, y)| reached.contains(x) && !reached.contains(y)).map(|(_, y)| y.clone()).collect();
            if more.is_empty() {
                break;
            }
            reached.extend(more);
        }
        let stable: BTreeSet<(String, String)> = cand
            .iter()
            .filter(|(x, y)| reached.contains(x) && !c.iter().any(|(x2, y2)| y2 == y && x2 != x))
            .cloned()
            .collect();
        if stable == c {
            models.push(c);
        }
    }
    models
}

/// Ancestor generations of `root`: each generation holds the parents of
/// the previous one not seen before.
pub fn ancestor_generations(parent: &[(String, String)], root: &str) -> Vec<BTreeSet<String>> {
    let mut gens = vec![BTreeSet::from([root.to_string()])];
    let mut seen = gens[0].clone();
    loop {
        let next: BTreeSet<String> = parent
            .iter()
            .filter(|(y, x)| gens.last().unwrap().contains(x) && !seen.contains(y))
            .map(|(y, _)| y.clone())
            .collect();
        if next.is_empty() {
            return gens;
        }
        seen.extend(next.iter().cloned());
        gens.push(next);
    }
}

/// Union of closed intervals: maximal intervals, sorted.
pub fn interval_union(ivs: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut v = ivs.to_vec();
    v.sort();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (f, t) in v {
        match out.last_mut() {
            Some(last) if f <= last.1 => last.1 = last.1.max(t),
            _ => out.push((f, t)),
        }
    }
    out
}

/// Least cost of a nonempty path between every pair, with the diagonal
/// starting at infinity so that cycles are included.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, i64)]) -> BTreeMap<(usize, usize), i64> {
    let inf = i64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for &(x, y, c) in edges {
        d[x][y] = d[x][y].min(c);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if d[i][j] < inf {
                out.insert((i, j), d[i][j]);
            }
        }
    }
    out
}

/// Company control by iterating to convergence: an owner controls itself
/// and every company in which the companies it controls hold over 50%.
pub fn company_control(owns: &[(String, String, i64)]) -> BTreeSet<(String, String)> {
    let mut control: BTreeSet<(String, String)> = owns.iter().map(|(c, _, _)| (c.clone(), c.clone())).collect();
    loop {
        let mut sums: BTreeMap<(String, String), i64> = BTreeMap::new();
        for (onr, c1) in &control {
            for (o, c2, per) in owns {
                if o == c1 {
                    *sums.entry((onr.clone(), c2.clone())).or_insert(0) += per;
                }
            }
        }
        let before = control.len();
        control.extend(sums.into_iter().filter(|(_, s)| *s > 50).map(|(k, _)| k));
        if control.len() == before {
            return control;
        }
    }
}

/// Random parent facts: a tree climbing from `marc` plus an unrelated tree.
pub fn random_parents(rng: &mut impl Rng, n: usize) -> Vec<(String, String)> {
    let mut roots = vec!["marc".to_string()];
    let mut others = vec!["q0".to_string()];
    let mut out = Vec::new();
    for i in 1..n {
        let name = format!("p{i}");
        let pool = if rng.gen_bool(0.2) { &mut others } else { &mut roots };
        let child = pool[rng.gen_range(0..pool.len())].clone();
        out.push((name.clone(), child));
        pool.push(name);
    }
    out
}

pub fn facts_text<T>(pred: &str, rows: &[T], show: impl Fn(&T) -> String) -> String {
    rows.iter().map(|r| format!("{pred}({}).\n", show(r))).collect()
}

pub fn path(p: &Path) -> String {
    p.display().to_string()
}
