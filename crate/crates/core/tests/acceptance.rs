//! Acceptance suite: one pass/fail line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ldl_core::analysis::{analyze, expand_aggregates, foe_transform};
use ldl_core::engine::{iterated_fixpoint, load_base_facts, Db, XyOptions};
use ldl_core::lang::{parse_program, print_program, Program};
use ldl_core::session::{Session, SessionOptions};
use ldl_core::sqlgen::normalize_sql;
use ldl_core::store::{StatePair, Tuple};
use ldl_core::uda::{builtin_catalog, fold};
use ldl_core::Value;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Rename variables to V0, V1, ... in order of first appearance.
fn canonical_rule(text: &str) -> String {
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = String::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\'' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != '\'' {
                i += 1;
            }
            i += 1;
            out.extend(&chars[start..i.min(chars.len())]);
            continue;
        }
        let starts_word = i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if starts_word && (c.is_uppercase() || c == '_') {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let n = names.len();
            let k = *names.entry(word).or_insert(n);
            out.push_str(&format!("V{k}"));
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

fn rules_text(p: &Program) -> Vec<String> {
    p.rules.iter().map(|r| r.to_string()).collect()
}

fn c1_foe() -> Outcome {
    let mut p = parse_program(&read_fixture("advisor.ldl")).unwrap();
    p.facts.clear();
    p.rules.retain(|r| &*r.head.pred == "actual_adv");
    let got: Vec<String> = rules_text(&foe_transform(&p)).iter().map(|r| canonical_rule(r)).collect();
    let golden = parse_program(&read_fixture("golden/foe_advisor.ldl")).unwrap();
    let want: Vec<String> = rules_text(&golden).iter().map(|r| canonical_rule(r)).collect();
    ensure!(got == want, "got {got:#?}\nwant {want:#?}");
    Ok(format!("{} rules match", got.len()))
}

fn st_set(s: &mut Session) -> BTreeSet<(String, String)> {
    s.facts("st")
        .unwrap()
        .iter()
        .map(|t| (t[0].to_string(), t[1].to_string()))
        .filter(|(x, _)| x != "root")
        .collect()
}

fn c2_choice_models() -> Outcome {
    let p = parse_program(&read_fixture("spanning_tree.ldl")).unwrap();
    let arcs: Vec<(String, String)> =
        p.facts.iter().filter(|f| &*f.pred == "g").map(|f| (f.args[0].to_string(), f.args[1].to_string())).collect();
    let models: BTreeSet<BTreeSet<(String, String)>> = spanning_tree_models(&arcs).into_iter().collect();
    let pair = |x: &str, y: &str| (x.to_string(), y.to_string());
    let listed: BTreeSet<BTreeSet<(String, String)>> = [
        [pair("a", "b"), pair("b", "c")].into(),
        [pair("a", "b"), pair("a", "c")].into(),
        [pair("a", "c"), pair("c", "b")].into(),
    ]
    .into();
    ensure!(models == listed, "brute force found {models:?}");
    let text = read_fixture("spanning_tree.ldl");
    let mut seen = BTreeSet::new();
    for seed in 1..=20 {
        let mut s = session_for(&text, seeded(seed));
        let eager = st_set(&mut s);
        ensure!(models.contains(&eager), "seed {seed}: eager model {eager:?}");
        let mut s = session_for(&text, seeded(seed));
        let piped: BTreeSet<(String, String)> = s
            .answers("st(X, Y)")
            .unwrap()
            .iter()
            .map(|t| (t[0].to_string(), t[1].to_string()))
            .filter(|(x, _)| x != "root")
            .collect();
        ensure!(models.contains(&piped), "seed {seed}: pipelined model {piped:?}");
        seen.insert(eager);
    }
    Ok(format!("3 models by brute force; 20 seeds gave {} of them", seen.len()))
}

fn c3_parity() -> Outcome {
    let rules = with_facts("parity.ldl", &["d"], "");
    let mut checked = 0;
    for n in 1..=20usize {
        let facts: String = (0..n).map(|i| format!("d(e{i}).\n")).collect();
        let text = format!("{rules}{facts}");
        for seed in 0..50u64 {
            let order = 1000 * n as u64 + seed;
            let mut s = session_for(&text, seeded(order));
            let piped = !s.answers("isodd").unwrap().is_empty();
            let eager = !s.facts("isodd").unwrap().is_empty();
            ensure!(piped == (n % 2 == 1) && eager == piped, "|d| = {n}, seed {order}: isodd pipelined {piped}, eager {eager}");
            checked += 1;
        }
    }
    Ok(format!("{checked} runs, 0 failures"))
}

fn c4_join_party() -> Outcome {
    let text = read_fixture("join_party.ldl");
    let want: BTreeSet<String> = ["mark", "tom", "jane", "penny", "jerry"].iter().map(|s| format!("({s})")).collect();
    for seed in 0..20 {
        let mut s = session_for(&text, seeded(seed));
        let eager = facts_of(&mut s, "willcome");
        ensure!(eager == want, "seed {seed}: {eager:?}");
        let mut s = session_for(&text, seeded(seed));
        let piped = answers_of(&mut s, "willcome");
        ensure!(piped == want, "seed {seed}, pipelined: {piped:?}");
    }
    Ok("willcome = {mark, tom, jane, penny, jerry} for 20 seeds".into())
}

fn c5_bistate() -> Outcome {
    let mut s = session_for(&read_fixture("ancestors.ldl"), SessionOptions::default());
    let text = s.explain("bistate", Some("all_anc")).unwrap();
    let got: BTreeSet<String> = text.lines().map(String::from).collect();
    let want: BTreeSet<String> = rules_text(&parse_program(&read_fixture("golden/bistate_ancestors.ldl")).unwrap())
        .into_iter()
        .chain(["new_delta_anc(marc).".to_string()])
        .collect();
    ensure!(text.lines().count() == 4 && got == want, "bistate:\n{text}");
    let a = s.analysis().unwrap();
    let x = a.xy_of("all_anc").unwrap();
    let strata: Vec<BTreeSet<String>> = x.strata.strata().into_iter().map(|s| s.iter().map(|p| p.to_string()).collect()).collect();
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let expected = vec![set(&["parent", "old_all_anc", "old_delta_anc"]), set(&["new_delta_anc"]), set(&["new_all_anc"])];
    ensure!(strata == expected, "strata {strata:?}");
    Ok("four bistate rules; S0/S1/S2 as listed".into())
}

fn ancestors_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=20);
    let parents = random_parents(&mut rng, n);
    let text = with_facts("ancestors.ldl", &["parent"], &facts_text("parent", &parents, |(y, x)| format!("{y}, {x}")));
    let gens = ancestor_generations(&parents, "marc");
    let mut delta = BTreeSet::new();
    let mut all = BTreeSet::new();
    for (j, g) in gens.iter().enumerate() {
        for x in g {
            delta.insert(format!("({j}, {x})"));
        }
        // States are emitted up to the first one that repeats: empty delta,
        // full ancestor set.
        for k in j..=gens.len() {
            for x in g {
                all.insert(format!("({k}, {x})"));
            }
        }
    }
    let mut s = session_for(&text, seeded(seed));
    ensure!(facts_of(&mut s, "delta_anc") == delta, "seed {seed}: delta_anc {:?}, want {delta:?}", facts_of(&mut s, "delta_anc"));
    ensure!(facts_of(&mut s, "all_anc") == all, "seed {seed}: all_anc {:?}, want {all:?}", facts_of(&mut s, "all_anc"));
    Ok(())
}

fn random_intervals(rng: &mut impl Rng) -> Vec<(String, i64, i64)> {
    let n = rng.gen_range(1..=15);
    let mut out: Vec<(String, i64, i64)> = Vec::new();
    while out.len() < n {
        let eno = format!("e{}", rng.gen_range(1..=3));
        let frm = rng.gen_range(0..40);
        let to = frm + rng.gen_range(1..=8);
        if !out.iter().any(|(e, f, t)| *e == eno && *f == frm && *t == to) {
            out.push((eno, frm, to));
        }
    }
    out
}

fn coalescing_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ivs = random_intervals(&mut rng);
    let facts = facts_text("emp_dep_sal", &ivs, |(e, f, t)| format!("0, {e}, toys, 100, {f}, {t}"));
    let text = with_facts("coalescing.ldl", &["emp_dep_sal"], &facts);
    let mut want = BTreeSet::new();
    let enos: BTreeSet<&String> = ivs.iter().map(|(e, _, _)| e).collect();
    for e in enos {
        let mine: Vec<(i64, i64)> = ivs.iter().filter(|(x, _, _)| x == e).map(|(_, f, t)| (*f, *t)).collect();
        for (f, t) in interval_union(&mine) {
            want.insert(format!("({e}, {f}, {t})"));
        }
    }
    let mut s = session_for(&text, seeded(seed));
    let got = facts_of(&mut s, "coalesced");
    ensure!(got == want, "seed {seed}: coalesced {got:?}, want {want:?}");
    Ok(())
}

fn random_digraph(rng: &mut impl Rng) -> (usize, Vec<(usize, usize, i64)>) {
    let n = rng.gen_range(2..=8);
    let mut edges = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x != y && rng.gen_bool(0.35) {
                edges.push((x, y, rng.gen_range(1..=20)));
            }
        }
    }
    (n, edges)
}

fn floyd_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, edges) = random_digraph(&mut rng);
    let text = with_facts("floyd.ldl", &["g"], &facts_text("g", &edges, |(x, y, c)| format!("n{x}, n{y}, {c}")));
    let want: BTreeSet<String> = floyd_warshall(n, &edges).into_iter().map(|((x, y), c)| format!("(n{x}, n{y}, {c})")).collect();
    let mut s = session_for(&text, seeded(seed));
    let got = facts_of(&mut s, "shortest");
    ensure!(got == want, "seed {seed}: shortest {got:?}, want {want:?}");
    Ok(())
}

fn c6_xy_evaluation() -> Outcome {
    for seed in 0..10 {
        ancestors_case(seed)?;
    }
    for seed in 0..20 {
        coalescing_case(seed)?;
    }
    for seed in 0..20 {
        floyd_case(seed)?;
    }
    Ok("ancestors 10/10, coalescing 20/20, shortest paths 20/20".into())
}

fn snapshots(text: &str, copy_opt: bool) -> Vec<Vec<ldl_core::engine::StepSnapshot>> {
    let a = analyze(&parse_program(text).unwrap()).unwrap();
    let mut db = Db::new();
    load_base_facts(&a, &mut db, None).unwrap();
    let (_, runs) = iterated_fixpoint(&a, &mut db, &XyOptions { record: true, copy_opt, ..XyOptions::default() }).unwrap();
    runs.into_iter().map(|r| r.snapshots).collect()
}

/// Best per-swap time over several batches, for a relation of `n` tuples.
fn swap_time(n: usize) -> Duration {
    let mut pair = StatePair::new("q", 2);
    for i in 0..n as i64 {
        pair.new.insert_if_new(Tuple::new(vec![Value::Int(i), Value::Int(-i)])).unwrap();
    }
    let rounds = 2000u32;
    let mut best = Duration::MAX;
    for _ in 0..7 {
        let mut spent = Duration::ZERO;
        for _ in 0..rounds {
            let t = Instant::now();
            pair.swap_state();
            spent += t.elapsed();
            pair.share_old_as_new();
        }
        pair.reclaim();
        best = best.min(spent / rounds);
    }
    assert_eq!(pair.new.len(), n);
    best
}

fn c7_copy_rules() -> Outcome {
    let mut compared = 0;
    let mut cases: Vec<String> = ["ancestors.ldl", "coalescing.ldl", "floyd.ldl"].iter().map(|f| read_fixture(f)).collect();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = random_parents(&mut rng, 15);
        cases.push(with_facts("ancestors.ldl", &["parent"], &facts_text("parent", &parents, |(y, x)| format!("{y}, {x}"))));
        let (_, edges) = random_digraph(&mut rng);
        cases.push(with_facts("floyd.ldl", &["g"], &facts_text("g", &edges, |(x, y, c)| format!("n{x}, n{y}, {c}"))));
    }
    for text in &cases {
        let on = snapshots(text, true);
        let off = snapshots(text, false);
        ensure!(!on.is_empty() && on == off, "snapshots differ for\n{text}");
        compared += on.iter().map(|r| r.len()).sum::<usize>();
    }
    let small = swap_time(10);
    let large = swap_time(200_000);
    let ratio = large.as_secs_f64() / small.as_secs_f64().max(1e-9);
    ensure!(ratio < 10.0, "swap_state took {small:?} at 10 tuples and {large:?} at 200000");
    Ok(format!("{compared} step snapshots identical; swap_state {small:?} vs {large:?} (x{ratio:.2})"))
}

fn c8_aggregates() -> Outcome {
    let reg = builtin_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ints = |xs: &[i64]| xs.iter().map(|&x| Value::Int(x)).collect::<Vec<_>>();
    for case in 0..100 {
        let n = rng.gen_range(1..=25);
        let xs: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        let items = ints(&xs);
        let sum: i64 = xs.iter().sum();
        let prefix: Vec<i64> = xs.iter().scan(0, |acc, &x| {
            *acc += x;
            Some(*acc)
        }).collect();
        let finals = [
            ("count", Value::Int(n as i64)),
            ("sum", Value::Int(sum)),
            ("min", Value::Int(*xs.iter().min().unwrap())),
            ("max", Value::Int(*xs.iter().max().unwrap())),
            ("avg", Value::Float(sum as f64 / n as f64)),
        ];
        for (name, want) in finals {
            let (early, fin) = fold(reg.lookup(name).unwrap(), &items).unwrap();
            ensure!(early.is_empty() && fin.len() == 1 && fin[0].equals(&want), "case {case}: {name} of {xs:?} gave {fin:?}, want {want}");
        }
        let (early, fin) = fold(reg.lookup("mcount").unwrap(), &items).unwrap();
        ensure!(fin.is_empty() && early == ints(&(1..=n as i64).collect::<Vec<_>>()), "case {case}: mcount {early:?}");
        let (early, fin) = fold(reg.lookup("msum").unwrap(), &items).unwrap();
        ensure!(fin.is_empty() && early == ints(&prefix), "case {case}: msum {early:?}");
    }

    for case in 0..20u64 {
        let n = rng.gen_range(1..=12);
        let mut ys: BTreeSet<i64> = BTreeSet::new();
        while ys.len() < n {
            ys.insert(rng.gen_range(-30..=30));
        }
        let facts: String = ys.iter().map(|y| format!("d({y}).\n")).collect();
        let text = format!("p(avg<Y>) <- d(Y).\n{facts}");
        let p = parse_program(&text).unwrap();
        let expanded = expand_aggregates(&p, &reg).unwrap();
        let a = analyze(&expanded).unwrap();
        let mut db = Db::new();
        load_base_facts(&a, &mut db, Some(case)).unwrap();
        iterated_fixpoint(&a, &mut db, &XyOptions::default()).unwrap();
        let by_rules: Vec<String> = db.sorted("p").iter().map(|t| t.to_string()).collect();
        let mut s = session_for(&text, seeded(case));
        let runtime: Vec<String> = facts_of(&mut s, "p").into_iter().collect();
        ensure!(by_rules == runtime && runtime.len() == 1, "case {case}: expanded {by_rules:?}, runtime {runtime:?}\n{}", print_program(&expanded));
    }

    let coales = reg.lookup("coales").unwrap();
    for case in 0..50 {
        let mut ivs: Vec<(i64, i64)> = random_intervals(&mut rng).into_iter().map(|(_, f, t)| (f, t)).collect();
        ivs.sort();
        ivs.dedup();
        let items: Vec<Value> = ivs.iter().map(|&(f, t)| Value::tuple(vec![Value::Int(f), Value::Int(t)])).collect();
        let merged: Vec<Value> = interval_union(&ivs).into_iter().map(|(f, t)| Value::tuple(vec![Value::Int(f), Value::Int(t)])).collect();
        let (early, fin) = fold(coales, &items).unwrap();
        let (head, last) = merged.split_at(merged.len() - 1);
        ensure!(early == head && fin == last, "case {case}: {ivs:?} gave early {early:?} final {fin:?}");
    }
    Ok("100 multisets x 7 folds, 20 expanded avg runs, 50 coales runs".into())
}

fn c9_company_control() -> Outcome {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6);
        let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let mut owns = Vec::new();
        for owner in &names {
            let mut left = 100;
            let mut targets: Vec<&String> = names.iter().filter(|t| *t != owner).collect();
            targets.shuffle(&mut rng);
            for t in targets.into_iter().take(rng.gen_range(0..n)) {
                if left < 5 {
                    break;
                }
                let per = rng.gen_range(5..=left.min(60));
                left -= per;
                owns.push((owner.clone(), t.clone(), per as i64));
            }
        }
        let want: BTreeSet<String> = company_control(&owns).into_iter().map(|(a, b)| format!("({a}, {b})")).collect();
        let text = with_facts("company_control.ldl", &["owns"], &facts_text("owns", &owns, |(a, b, p)| format!("{a}, {b}, {p}")));
        for order in 0..3 {
            let mut s = session_for(&text, seeded(seed * 10 + order));
            let eager = facts_of(&mut s, "control");
            ensure!(eager == want, "seed {seed}/{order}: control {eager:?}, want {want:?}\n{text}");
            let mut s = session_for(&text, seeded(seed * 10 + order));
            let piped = answers_of(&mut s, "control");
            ensure!(piped == want, "seed {seed}/{order}: pipelined control {piped:?}, want {want:?}");
        }
    }
    Ok("20 random graphs, 3 fact orders each".into())
}

const CHOICE_FREE: [&str; 8] =
    ["ancestors.ldl", "coalescing.ldl", "floyd.ldl", "company_control.ldl", "bom.ldl", "join_party.ldl", "query3.ldl", "sqlgen/employee.ldl"];

fn c10_pipelining() -> Outcome {
    let facts: String = (0..1000).map(|i| format!("d(x{i}).\n")).collect();
    let text = format!("{}{facts}", read_fixture("morethan14.ldl"));
    let mut s = session_for(&text, SessionOptions::default());
    let (got, chain, calls) = {
        let mut it = s.query_str("morethan14").unwrap();
        let got = it.next().transpose().unwrap();
        let form = it.form();
        (got, form.extensions().get("chain").copied().unwrap_or(0), form.stats.get_tuple)
    };
    ensure!(got.is_some(), "morethan14 had no answer");
    ensure!(chain <= 15, "chain grew by {chain}");
    let mut checked = 0;
    for f in CHOICE_FREE {
        let text = read_fixture(f);
        let mut eager = Session::new(SessionOptions::default());
        eager.load_file(fixtures().join(f)).unwrap();
        let mut piped = Session::new(SessionOptions::default());
        piped.load_file(fixtures().join(f)).unwrap();
        for p in derived_preds(&eager) {
            let e = facts_of(&mut eager, &p);
            let a = answers_of(&mut piped, &p);
            ensure!(e == a, "{f} {p}: eager {e:?} pipelined {a:?}\n{text}");
            checked += 1;
        }
    }
    Ok(format!("first answer after {chain} chain extensions and {calls} calls; {checked} predicates agree"))
}

fn c11_backtracking() -> Outcome {
    let text = read_fixture("query3.ldl");
    let run = |on: bool| {
        let mut s = session_for(&text, SessionOptions { backtracking: on, ..SessionOptions::default() });
        let mut it = s.query_str("query3(A, B)").unwrap();
        let mut answers = BTreeSet::new();
        for t in it.by_ref() {
            answers.insert(t.unwrap().to_string());
        }
        (answers, it.form().stats.get_tuple)
    };
    let (a_on, calls_on) = run(true);
    let (a_off, calls_off) = run(false);
    ensure!(a_on == a_off, "answers differ: {a_on:?} vs {a_off:?}");
    let ratio = calls_on as f64 / calls_off as f64;
    ensure!(ratio < 0.10, "{calls_on} calls with jumps, {calls_off} without");
    Ok(format!("{} answers; {calls_on} vs {calls_off} get_tuple calls ({:.1}%)", a_on.len(), 100.0 * ratio))
}

fn c12_offload() -> Outcome {
    let mut s = Session::default();
    s.load_file(fixtures().join("sqlgen/employee.ldl")).unwrap();
    let text = s.explain("sql", Some("expensive_employee")).unwrap();
    let (rule, sql) = text.split_once('\n').unwrap();
    let golden = read_fixture("sqlgen/employee.golden.sql");
    ensure!(normalize_sql(sql) == normalize_sql(&golden), "generated\n{sql}");
    ensure!(rule == "expensive_employee(Name) <- sql_node(Name).", "rule {rule}");
    let mut files: Vec<_> = std::fs::read_dir(fixtures().join("sqlgen"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ldl") && !p.ends_with("bad_types.ldl"))
        .collect();
    files.sort();
    let mut preds = 0;
    let mut shapes = BTreeSet::new();
    for f in &files {
        let mut on = Session::default();
        on.load_file(f).unwrap();
        let mut off = Session::new(SessionOptions { offload: false, ..SessionOptions::default() });
        off.load_file(f).unwrap();
        for q in on.externals().unwrap().nodes.values() {
            if q.has_not_exists() {
                shapes.insert("NOT EXISTS");
            }
            if !q.group_by.is_empty() {
                shapes.insert("GROUP BY");
            }
        }
        for p in derived_preds(&off) {
            let local = facts_of(&mut off, &p);
            ensure!(facts_of(&mut on, &p) == local, "{} {p}: eager results differ", path(f));
            ensure!(answers_of(&mut on, &p) == local, "{} {p}: pipelined results differ", path(f));
            preds += 1;
        }
    }
    ensure!(shapes.len() == 2, "fixtures exercise only {shapes:?}");
    Ok(format!("listing matches; {preds} predicates over {} fixtures agree", files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("foe transform", c1_foe),
        ("choice models", c2_choice_models),
        ("parity", c3_parity),
        ("join the party", c4_join_party),
        ("bistate and strata", c5_bistate),
        ("XY evaluation", c6_xy_evaluation),
        ("copy-rule sharing", c7_copy_rules),
        ("aggregates", c8_aggregates),
        ("company control", c9_company_control),
        ("pipelining", c10_pipelining),
        ("intelligent backtracking", c11_backtracking),
        ("SQL offload", c12_offload),
    ];
    // Filters match a criterion number or part of its name.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_lowercase()).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| *f == (i + 1).to_string() || name.to_lowercase().contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
