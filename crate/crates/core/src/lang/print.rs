use std::fmt::{self, Display, Formatter, Write};

use crate::value::{is_bare_symbol, Value};

use super::{ArithOp, Atom, Expr, Head, HeadArg, Literal, Program, Rule, SchemaDecl, Source, Term, Var};

/// Render a program as source text. The result re-parses to an equal AST.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.schema.is_empty() {
        out.push_str("database({\n");
        for s in &p.schema {
            let _ = writeln!(out, "    {s}");
        }
        out.push_str("}).\n");
    }
    for f in &p.facts {
        let _ = writeln!(out, "{f}.");
    }
    for r in &p.rules {
        let _ = writeln!(out, "{r}");
    }
    out
}

impl Display for Var {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.is_anonymous() {
            f.write_str("_")
        } else {
            f.write_str(&self.0)
        }
    }
}

fn write_list<T: Display>(f: &mut Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Temporal(v, off) => write!(f, "{v}+{off}"),
            Term::Compound(fun, args) => {
                if !fun.is_empty() {
                    write!(f, "{}", Value::sym(fun))?;
                }
                f.write_str("(")?;
                write_list(f, args)?;
                f.write_str(")")
            }
        }
    }
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => " mod ",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            _ => 2,
        }
    }
}

fn write_expr(f: &mut Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    match e {
        Expr::Term(Term::Const(v)) if v.as_f64().is_some_and(|x| x < 0.0) && min_prec > 0 => {
            write!(f, "({v})")
        }
        Expr::Term(t) => write!(f, "{t}"),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            write_expr(f, inner, 3)
        }
        Expr::Bin(op, a, b) => {
            let p = op.precedence();
            let paren = p < min_prec;
            if paren {
                f.write_str("(")?;
            }
            write_expr(f, a, p)?;
            f.write_str(op.symbol())?;
            write_expr(f, b, p + 1)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

impl Display for Atom {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_pred(f, &self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn write_pred(f: &mut Formatter<'_>, pred: &str) -> fmt::Result {
    if is_bare_symbol(pred) || pred == "choice" {
        f.write_str(pred)
    } else {
        write!(f, "{}", Value::sym(pred))
    }
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom { atom, negated } => {
                if *negated {
                    f.write_str("~")?;
                }
                write!(f, "{atom}")
            }
            Literal::Choice { left, right } => {
                f.write_str("choice((")?;
                write_list(f, left)?;
                f.write_str("), (")?;
                write_list(f, right)?;
                f.write_str("))")
            }
            Literal::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
        }
    }
}

impl Display for HeadArg {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            HeadArg::Term(t) => write!(f, "{t}"),
            HeadArg::Aggregate { name, arg } => write!(f, "{name}<{arg}>"),
        }
    }
}

impl Display for Head {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_pred(f, &self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl Display for Rule {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" <- ")?;
            write_list(f, &self.body)?;
        }
        f.write_str(".")
    }
}

impl Display for SchemaDecl {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Source::External { adapter, .. } = &self.source {
            write!(f, "{adapter}::")?;
        }
        write!(f, "{}(", self.pred)?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", c.name, c.ty.name())?;
        }
        f.write_str(")")?;
        if let Source::External { table, options, .. } = &self.source {
            if table != &*self.pred {
                write!(f, " table {}", Value::sym(table))?;
            }
            for (k, v) in options {
                write!(f, " {k} {}", Value::sym(v))?;
            }
        }
        Ok(())
    }
}
