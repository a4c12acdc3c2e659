//! Benchmark workloads shared by the criterion harnesses.

use std::fmt::Write;

/// Transitive closure over a chain of `n` nodes.
pub fn chain_closure(n: usize) -> String {
    let mut s = String::from("tc(X, Y) <- e(X, Y).\ntc(X, Z) <- tc(X, Y), e(Y, Z).\n");
    for i in 0..n {
        let _ = writeln!(s, "e({i}, {}).", i + 1);
    }
    s
}

/// The query3 join: `b1` with `n` values, `n` B-values per A, `b2` accepting none.
pub fn query3(n: usize) -> String {
    let mut s = String::from("query3(A, B) <- b1(A), p(A, B), b2(A).\nb2(-1).\n");
    for a in 0..n {
        let _ = writeln!(s, "b1({a}).");
        for b in 0..n {
            let _ = writeln!(s, "p({a}, {}).", 1000 + b);
        }
    }
    s
}

/// Online count over a choice chain of `n` elements.
pub fn morethan14(n: usize) -> String {
    let mut s = String::from(
        "chain(nil, nil).
chain(X, Y) <- chain(_, X), d(Y), choice((X), (Y)), choice((Y), (X)).
mcount(X, 1) <- chain(nil, X), X != nil.
mcount(Y, J1) <- mcount(X, J), chain(X, Y), J1 = J + 1.
morethan14 <- mcount(_, J), J > 14.
",
    );
    for i in 0..n {
        let _ = writeln!(s, "d(x{i}).");
    }
    s
}

/// Least-cost paths over a ring of `n` nodes with chords.
pub fn floyd(n: usize) -> String {
    let mut s = String::from(
        "delta(0, X, Y, C) <- g(X, Y, C).
new(J+1, X, Z, C) <- delta(J, X, Y, C1), all(J, Y, Z, C2), C = C1 + C2.
new(J+1, X, Z, C) <- all(J, X, Y, C1), delta(J, Y, Z, C2), C = C1 + C2.
newmin(J, X, Z, min<C>) <- new(J, X, Z, C).
discard(J+1, X, Z, C1) <- newmin(J+1, X, Z, C1), all(J, X, Z, C2), C1 >= C2.
delta(J, X, Z, C) <- newmin(J, X, Z, C), ~discard(J, X, Z, _).
all(J+1, X, Z, C) <- all(J, X, Z, C), ~delta(J+1, X, Z, _).
all(J, X, Z, C) <- delta(J, X, Z, C).
shortest(X, Z, min<C>) <- all(_, X, Z, C).
",
    );
    for i in 0..n {
        let _ = writeln!(s, "g(n{i}, n{}, {}).", (i + 1) % n, 1 + i % 3);
        let _ = writeln!(s, "g(n{i}, n{}, {}).", (i + 3) % n, 5);
    }
    s
}
