use std::sync::Arc;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::value::Value;

use super::lexer::{syntax, tokenize, Tok, Token};
use super::{
    ArithOp, Atom, CmpOp, Column, ColumnType, Expr, Head, HeadArg, Literal, Pos, Program, Rule,
    SchemaDecl, Source, Term, Var,
};

/// Parse a complete program. Arity consistency is checked across all uses.
pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser::new(text)?;
    let mut prog = Program::default();
    while !p.at(&Tok::Eof) {
        p.anon = 0;
        if p.at_ident("database") && p.peek_at(1) == &Tok::LParen {
            prog.schema.extend(p.schema_block()?);
            continue;
        }
        let (head, body, pos) = p.clause()?;
        match (body.is_empty(), head.as_atom()) {
            (true, Some(atom)) if atom.is_ground() => prog.facts.push(atom),
            _ => prog.rules.push(Rule { head, body, pos }),
        }
    }
    prog.arities()?;
    Ok(prog)
}

/// Parse a single atom such as a query `p(X, a)`, with an optional final dot.
pub fn parse_atom(text: &str) -> Result<Atom> {
    let mut p = Parser::new(text)?;
    let pos = p.pos();
    let atom = p.atom()?;
    p.eat(&Tok::Dot);
    if !p.at(&Tok::Eof) {
        return Err(syntax(p.pos(), "unexpected input after query atom"));
    }
    if atom.args.iter().any(|a| matches!(a, Term::Temporal(_, off) if *off > 0)) {
        return Err(syntax(pos, "successor terms are not allowed in queries"));
    }
    Ok(atom)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    anon: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser> {
        Ok(Parser { toks: tokenize(text)?, i: 0, anon: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> Error {
        let found = match self.peek() {
            Tok::Eof => "end of input".to_string(),
            t => format!("{t:?}"),
        };
        syntax(self.pos(), format!("expected {what}, found {found}"))
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn fresh_anon(&mut self) -> Var {
        let v = Var::new(&format!("_#{}", self.anon));
        self.anon += 1;
        v
    }

    fn var(&mut self, name: &str) -> Var {
        if name == "_" {
            self.fresh_anon()
        } else {
            Var::new(name)
        }
    }

    fn clause(&mut self) -> Result<(Head, Vec<Literal>, Pos)> {
        let pos = self.pos();
        if self.at(&Tok::Tilde) {
            return Err(syntax(pos, "a negated atom cannot be a rule head"));
        }
        let head = self.head()?;
        let mut body = Vec::new();
        if self.eat(&Tok::Arrow) {
            if !self.at(&Tok::Dot) {
                loop {
                    body.push(self.literal()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
        }
        self.expect(&Tok::Dot, "'.' at end of clause")?;
        Ok((head, body, pos))
    }

    fn head(&mut self) -> Result<Head> {
        let pred = self.ident("predicate name")?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                let is_agg = matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Lt;
                if is_agg {
                    let name = self.ident("aggregate name")?;
                    self.advance();
                    let arg = self.term(false)?;
                    self.expect(&Tok::Gt, "'>' closing aggregate argument")?;
                    args.push(HeadArg::Aggregate { name: Arc::from(name.as_str()), arg });
                } else {
                    args.push(HeadArg::Term(self.term(args.is_empty())?));
                }
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen, "')' closing head arguments")?;
        }
        Ok(Head { pred: Arc::from(pred.as_str()), args })
    }

    fn atom(&mut self) -> Result<Atom> {
        let pred = self.ident("predicate name")?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                args.push(self.term(args.is_empty())?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen, "')' closing arguments")?;
        }
        Ok(Atom { pred: Arc::from(pred.as_str()), args })
    }

    fn literal(&mut self) -> Result<Literal> {
        let pos = self.pos();
        if self.eat(&Tok::Tilde) {
            if self.at_ident("choice") {
                return Err(syntax(pos, "a choice goal cannot be negated"));
            }
            return Ok(Literal::neg(self.atom()?));
        }
        if self.at_ident("choice") && self.peek_at(1) == &Tok::LParen {
            return self.choice(pos);
        }
        if matches!(self.peek(), Tok::Ident(_)) {
            let save = (self.i, self.anon);
            if let Ok(atom) = self.atom() {
                if matches!(self.peek(), Tok::Comma | Tok::Dot) {
                    return Ok(Literal::pos(atom));
                }
            }
            (self.i, self.anon) = save;
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Err(self.unexpected("comparison operator")),
        };
        self.advance();
        let rhs = self.expr()?;
        Ok(Literal::Compare { op, lhs, rhs })
    }

    fn choice(&mut self, pos: Pos) -> Result<Literal> {
        self.advance();
        self.expect(&Tok::LParen, "'(' after choice")?;
        let left = self.var_group()?;
        self.expect(&Tok::Comma, "',' between choice sides")?;
        let right = self.var_group()?;
        self.expect(&Tok::RParen, "')' closing choice goal")?;
        if right.is_empty() {
            return Err(syntax(pos, "empty choice right side"));
        }
        if let Some(v) = left.iter().find(|v| right.contains(v)) {
            return Err(syntax(pos, format!("variable {} on both sides of a choice goal", v.name())));
        }
        Ok(Literal::Choice { left, right })
    }

    fn var_group(&mut self) -> Result<Vec<Var>> {
        let parenthesized = self.eat(&Tok::LParen);
        let mut vars = Vec::new();
        if parenthesized && self.eat(&Tok::RParen) {
            return Ok(vars);
        }
        loop {
            match self.peek().clone() {
                Tok::Var(name) if name != "_" => {
                    self.advance();
                    vars.push(Var::new(&name));
                }
                _ => return Err(self.unexpected("variable in choice goal")),
            }
            if !parenthesized || !self.eat(&Tok::Comma) {
                break;
            }
        }
        if parenthesized {
            self.expect(&Tok::RParen, "')' closing choice variables")?;
        }
        Ok(vars)
    }

    /// A term in argument position. `temporal` allows the `J+1` form.
    fn term(&mut self, temporal: bool) -> Result<Term> {
        self.term_in(Some(temporal))
    }

    /// `arg` is `None` inside arithmetic expressions, where `+` is an operator.
    fn term_in(&mut self, arg: Option<bool>) -> Result<Term> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Var(name) => {
                self.advance();
                let v = self.var(&name);
                if let (Some(temporal), true) = (arg, self.at(&Tok::Plus)) {
                    if !temporal {
                        return Err(syntax(pos, "arithmetic is only allowed in comparisons"));
                    }
                    self.advance();
                    let off = match self.advance() {
                        Tok::Int(s) => s.parse::<u8>().map_err(|_| syntax(pos, "temporal offset too large"))?,
                        _ => return Err(syntax(pos, "expected integer offset after '+'")),
                    };
                    return Ok(if off == 0 { Term::Var(v) } else { Term::Temporal(v, off) });
                }
                Ok(Term::Var(v))
            }
            Tok::Int(s) => {
                self.advance();
                Ok(Term::Const(parse_int(&s, false)))
            }
            Tok::Minus => {
                self.advance();
                match self.advance() {
                    Tok::Int(s) => Ok(Term::Const(parse_int(&s, true))),
                    Tok::Float(f) => Ok(Term::Const(Value::Float(-f))),
                    _ => Err(syntax(pos, "expected number after '-'")),
                }
            }
            Tok::Float(f) => {
                self.advance();
                Ok(Term::Const(Value::Float(f)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Term::Const(Value::sym(&s)))
            }
            Tok::Ident(name) => {
                self.advance();
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    loop {
                        args.push(self.term(false)?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen, "')' closing compound term")?;
                    Ok(Term::Compound(Arc::from(name.as_str()), args))
                } else {
                    Ok(Term::Const(Value::sym(&name)))
                }
            }
            Tok::LParen => {
                self.advance();
                let mut args = Vec::new();
                loop {
                    args.push(self.term(false)?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RParen, "')' closing tuple")?;
                if args.len() == 1 {
                    Ok(args.pop().unwrap())
                } else {
                    Ok(Term::Compound(Arc::from(""), args))
                }
            }
            _ => Err(self.unexpected("term")),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                Tok::Ident(s) if s == "mod" => ArithOp::Mod,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Tok::Minus => match self.peek_at(1) {
                Tok::Int(_) | Tok::Float(_) => Ok(Expr::Term(self.term_in(None)?)),
                _ => {
                    self.advance();
                    Ok(Expr::Neg(Box::new(self.unary()?)))
                }
            },
            Tok::LParen => {
                // Either a parenthesized expression or a tuple term.
                let save = (self.i, self.anon);
                self.advance();
                let inner = self.expr()?;
                if self.eat(&Tok::RParen) {
                    return Ok(inner);
                }
                (self.i, self.anon) = save;
                Ok(Expr::Term(self.term_in(None)?))
            }
            _ => Ok(Expr::Term(self.term_in(None)?)),
        }
    }

    fn schema_block(&mut self) -> Result<Vec<SchemaDecl>> {
        self.advance();
        self.expect(&Tok::LParen, "'(' after database")?;
        self.expect(&Tok::LBrace, "'{' opening schema block")?;
        let mut decls: Vec<SchemaDecl> = Vec::new();
        loop {
            while self.eat(&Tok::Comma) {}
            if self.eat(&Tok::RBrace) {
                break;
            }
            let starts_entry = matches!(self.peek(), Tok::Ident(_))
                && matches!(self.peek_at(1), Tok::ColonColon | Tok::LParen);
            if starts_entry {
                decls.push(self.schema_entry()?);
                continue;
            }
            let pos = self.pos();
            let key = self.ident("schema option or relation declaration")?;
            let value = match self.advance() {
                Tok::Ident(s) | Tok::Var(s) | Tok::Str(s) | Tok::Int(s) => s,
                _ => return Err(syntax(pos, format!("missing value for schema option {key}"))),
            };
            let Some(decl) = decls.last_mut() else {
                return Err(syntax(pos, "schema option before any relation declaration"));
            };
            match &mut decl.source {
                Source::External { table, options, .. } => {
                    if key == "table" {
                        *table = value;
                    } else {
                        options.push((key, value));
                    }
                }
                Source::Internal => return Err(syntax(pos, "options are only allowed on external relations")),
            }
        }
        self.expect(&Tok::RParen, "')' closing database declaration")?;
        self.expect(&Tok::Dot, "'.' after database declaration")?;
        Ok(decls)
    }

    fn schema_entry(&mut self) -> Result<SchemaDecl> {
        let pos = self.pos();
        let first = self.ident("relation name")?;
        let (adapter, pred) = if self.eat(&Tok::ColonColon) {
            (Some(first), self.ident("relation name")?)
        } else {
            (None, first)
        };
        self.expect(&Tok::LParen, "'(' opening column list")?;
        let mut columns = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                let name = match self.advance() {
                    Tok::Var(s) | Tok::Ident(s) => s,
                    _ => return Err(syntax(self.pos(), "expected column name")),
                };
                let ty = if self.eat(&Tok::Colon) { self.column_type()? } else { ColumnType::Any };
                columns.push(Column { name, ty });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "')' closing column list")?;
        let source = match adapter {
            Some(adapter) => Source::External { adapter, table: pred.clone(), options: Vec::new() },
            None => Source::Internal,
        };
        Ok(SchemaDecl { pred: Arc::from(pred.as_str()), columns, source, pos })
    }

    fn column_type(&mut self) -> Result<ColumnType> {
        let pos = self.pos();
        let name = self.ident("column type")?;
        let ty = match name.as_str() {
            "int" | "integer" => ColumnType::Int,
            "float" | "real" | "double" => ColumnType::Float,
            "string" | "char" | "varchar" | "text" => ColumnType::String,
            "any" => ColumnType::Any,
            other => return Err(syntax(pos, format!("unknown column type {other}"))),
        };
        if self.eat(&Tok::LParen) {
            match self.advance() {
                Tok::Int(_) => {}
                _ => return Err(syntax(pos, "expected width in column type")),
            }
            self.expect(&Tok::RParen, "')' closing column width")?;
        }
        Ok(ty)
    }
}

fn parse_int(s: &str, negative: bool) -> Value {
    let text = if negative { format!("-{s}") } else { s.to_string() };
    match text.parse::<i64>() {
        Ok(i) => Value::Int(i),
        Err(_) => Value::from_bigint(text.parse::<BigInt>().expect("digits")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advisor_rule() {
        let p = parse_program(
            "actual_adv(S,P) <- student(S,M,Y), professor(P,M), choice((S),(P)).",
        )
        .unwrap();
        let r = &p.rules[0];
        assert_eq!(r.body.len(), 3);
        assert!(matches!(&r.body[2], Literal::Choice { left, right } if left.len() == 1 && right.len() == 1));
    }

    #[test]
    fn empty_input() {
        assert!(parse_program("").unwrap().is_empty());
    }

    #[test]
    fn empty_choice_right_side_is_rejected() {
        let e = parse_program("p(X) <- q(X), choice((X),()).").unwrap_err();
        assert!(e.to_string().contains("empty choice right side"), "{e}");
    }

    #[test]
    fn arity_mismatch() {
        let e = parse_program("p(a). p(a, b).").unwrap_err();
        assert!(matches!(e, Error::Arity { .. }));
    }

    #[test]
    fn syntax_error_position() {
        match parse_program("p(a).\nq(X) <- r(X)").unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn temporal_and_arith() {
        let p = parse_program("delta_anc(J+1, Y) <- delta_anc(J, X), parent(Y, X), J1 = J + 1.").unwrap();
        let r = &p.rules[0];
        assert!(matches!(r.head.args[0], HeadArg::Term(Term::Temporal(_, 1))));
        assert!(matches!(&r.body[2], Literal::Compare { rhs: Expr::Bin(ArithOp::Add, ..), .. }));
        assert!(parse_program("p(X, Y+1) <- q(X, Y).").is_err());
    }

    #[test]
    fn aggregates_and_tuples() {
        let p = parse_program("emp_proj(Eno, coales<(From, To)>) <- emp(Eno, _, _, (From, To)).").unwrap();
        let r = &p.rules[0];
        assert!(matches!(&r.head.args[1], HeadArg::Aggregate { arg: Term::Compound(f, a), .. } if f.is_empty() && a.len() == 2));
        let anon: Vec<_> = r.body_vars().into_iter().filter(|v| v.is_anonymous()).collect();
        assert_eq!(anon.len(), 2);
    }

    #[test]
    fn uda_definitions_are_rules() {
        let p = parse_program(
            "single(avg, Y, cs(1, Y)).\n\
             multi(avg, Y, cs(Cnt, Sum), cs(Cnt1, Sum1)) <- Cnt1 = Cnt + 1, Sum1 = Sum + Y.\n\
             ereturn(avg, X, cs(Count, Sum), Avg) <- Count mod 100 = 0, Avg = Sum / Count.",
        )
        .unwrap();
        assert_eq!(p.rules.len(), 3);
        assert!(p.facts.is_empty());
    }

    #[test]
    fn schema_block() {
        let p = parse_program(
            "database({
                sybase::employee(NAME:char(30),SALARY:int, MANAGER:char(30))
                    from sybase_tarski
                    use payroll
                    user_name 'john'
                    password nhoj
                dept(D:int)
             }).",
        )
        .unwrap();
        assert_eq!(p.schema.len(), 2);
        assert_eq!(p.schema[0].adapter(), Some("sybase"));
        assert_eq!(p.schema[0].columns[1].ty, ColumnType::Int);
        assert_eq!(p.schema[0].columns[0].ty, ColumnType::String);
        assert!(!p.schema[1].is_external());
    }

    #[test]
    fn query_atom() {
        let a = parse_atom("actual_adv(S, P).").unwrap();
        assert_eq!(a.args.len(), 2);
        assert!(parse_atom("p(X) q").is_err());
    }
}
