use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ldl_bench::{chain_closure, floyd, morethan14, query3};
use ldl_core::session::{Session, SessionOptions};

fn loaded(text: &str, opts: SessionOptions) -> Session {
    let mut s = Session::new(opts);
    s.load_source(text, Path::new(".")).unwrap();
    s
}

fn eager_closure(c: &mut Criterion) {
    let mut g = c.benchmark_group("closure");
    for n in [50, 200] {
        let text = chain_closure(n);
        g.bench_with_input(BenchmarkId::new("eager", n), &text, |b, t| {
            b.iter(|| loaded(t, SessionOptions::default()).facts("tc").unwrap().len())
        });
        g.bench_with_input(BenchmarkId::new("pipelined", n), &text, |b, t| {
            b.iter(|| loaded(t, SessionOptions::default()).answers("tc(X, Y)").unwrap().len())
        });
    }
    g.finish();
}

fn backtracking(c: &mut Criterion) {
    let text = query3(60);
    let mut g = c.benchmark_group("query3");
    for on in [true, false] {
        g.bench_function(if on { "jumps" } else { "chronological" }, |b| {
            let mut s = loaded(&text, SessionOptions { backtracking: on, ..SessionOptions::default() });
            b.iter(|| s.answers("query3(A, B)").unwrap().len())
        });
    }
    g.finish();
}

fn first_answer(c: &mut Criterion) {
    let text = morethan14(1000);
    c.bench_function("morethan14 first answer", |b| {
        b.iter(|| {
            let mut s = loaded(&text, SessionOptions::default());
            let mut it = s.query_str("morethan14").unwrap();
            it.next().unwrap().unwrap()
        })
    });
}

fn xy_floyd(c: &mut Criterion) {
    let text = floyd(12);
    c.bench_function("floyd 12 nodes", |b| b.iter(|| loaded(&text, SessionOptions::default()).facts("shortest").unwrap().len()));
}

criterion_group!(benches, eager_closure, backtracking, first_answer, xy_floyd);
criterion_main!(benches);
