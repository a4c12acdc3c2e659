use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use ldl_cli::command_loop;
use ldl_core::session::{Session, SessionOptions};

fn fixtures() -> PathBuf {
    std::env::var_os("LDL_FIXTURES").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"))
}

fn ldl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldl")).args(args).env("LDL_FIXTURES", fixtures()).output().unwrap()
}

fn queries(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn repl(opts: SessionOptions, input: &str) -> (i32, String, String) {
    let mut s = Session::new(opts);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = command_loop(&mut s, input.as_bytes(), &mut out, &mut err, false);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

#[test]
fn advisor_has_one_answer() {
    let (code, out, _) = repl(SessionOptions::default(), &format!("load {}\nquery actual_adv(S,P).\n", fixture("advisor.ldl")));
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2, "{out}");
    assert!(lines[0].starts_with("actual_adv('Jim Black', "), "{out}");
    assert_eq!(lines[1], "-- 1 answer");
}

#[test]
fn explain_bistate_lists_four_rules() {
    let (code, out, _) = repl(SessionOptions::default(), &format!("load {}\nexplain bistate all_anc\n", fixture("ancestors.ldl")));
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "new_delta_anc(marc).\n\
         new_delta_anc(Y) <- old_delta_anc(X), parent(Y, X), ~old_all_anc(Y).\n\
         new_all_anc(X) <- old_all_anc(X).\n\
         new_all_anc(X) <- new_delta_anc(X).\n"
    );
}

#[test]
fn unknown_predicate_and_command() {
    let (code, out, err) = repl(SessionOptions::default(), &format!("load {}\nquery nosuch(X).\nfrobnicate\nquit\nquery elig_adv(S,P).\n", fixture("advisor.ldl")));
    assert_eq!(code, 1);
    assert!(err.contains("error: unknown predicate nosuch"), "{err}");
    assert!(err.contains("unknown command frobnicate"), "{err}");
    assert!(out.is_empty(), "nothing runs after quit: {out}");
}

#[test]
fn analysis_errors_carry_positions() {
    let bad = queries("p(X) <- q(Y).\n");
    let q = queries("query p(X).\n");
    let o = ldl(&["--batch", q.path().to_str().unwrap(), bad.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("1:"), "{err}");
}

#[test]
fn missing_program_file() {
    let q = queries("query p(X).\n");
    let o = ldl(&["--batch", q.path().to_str().unwrap(), "no/such/file.ldl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/file.ldl"));
}

#[test]
fn parity_verdict_is_seed_independent() {
    // Three d facts, so isodd holds under every seed.
    let q = queries("query isodd.\n");
    for seed in 1..=50 {
        let o = ldl(&["--seed", &seed.to_string(), "--batch", q.path().to_str().unwrap(), "parity.ldl"]);
        assert!(o.status.success());
        assert_eq!(String::from_utf8_lossy(&o.stdout), "isodd\n-- 1 answer\n", "seed {seed}");
    }
}

#[test]
fn step_limit_exit_code() {
    let prog = queries("nat(0, 0).\nnat(J + 1, N) <- nat(J, M), N = M + 1.\n");
    let q = queries("query nat(J, N).\n");
    let o = ldl(&["--max-steps", "3", "--batch", q.path().to_str().unwrap(), prog.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step limit reached"));
}

#[test]
fn trace_shows_jump_back_to_b1() {
    let q = queries("query query3(A, B).\n");
    let o = ldl(&["--trace", "--batch", q.path().to_str().unwrap(), "query3.ldl"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), "-- 0 answers\n");
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.lines().any(|l| l.contains("jump from b2(A) to b1(A)")), "{}", &err[..err.len().min(2000)]);
}

#[test]
fn batch_and_interactive_agree() {
    let cmds = "query st(X, Y).\nfacts st\nquery elig_adv(S, P).\n";
    for (file, seed) in [("spanning_tree.ldl", 3), ("advisor.ldl", 9)] {
        let q = queries(cmds);
        let o = ldl(&["--seed", &seed.to_string(), "--batch", q.path().to_str().unwrap(), file]);
        let opts = SessionOptions { seed: Some(seed), ..SessionOptions::default() };
        let (_, out, _) = repl(opts, &format!("load {}\n{cmds}", fixture(file)));
        assert_eq!(String::from_utf8_lossy(&o.stdout), out, "{file}");
    }
}

#[test]
fn offload_flag_changes_nothing_visible() {
    let q = queries("query expensive_employee(N).\nquery davg(D, A).\nquery only_mgr(N).\n");
    let sorted = |o: Output| {
        let mut l: Vec<String> = String::from_utf8_lossy(&o.stdout).lines().map(String::from).collect();
        l.sort();
        l
    };
    let on = ldl(&["--batch", q.path().to_str().unwrap(), "sqlgen/employee.ldl"]);
    let off = ldl(&["--no-offload", "--batch", q.path().to_str().unwrap(), "sqlgen/employee.ldl"]);
    assert!(on.status.success() && off.status.success());
    assert_eq!(sorted(on), sorted(off));
}

#[test]
fn set_and_facts() {
    let input = format!("load {}\nset trace maybe\nset seed 4\nfacts willcome\n", fixture("join_party.ldl"));
    let (code, out, err) = repl(SessionOptions::default(), &input);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("invalid value"));
    assert!(out.ends_with("-- 5 facts\n"), "{out}");
}
