use crate::error::{Error, Result};

use super::Pos;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    /// Lowercase-initial identifier.
    Ident(String),
    /// Uppercase- or underscore-initial identifier.
    Var(String),
    Int(String),
    Float(f64),
    /// Quoted constant, either quote style.
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Arrow,
    Tilde,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    ColonColon,
    Colon,
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub(crate) fn syntax(pos: Pos, message: impl Into<String>) -> Error {
    Error::Syntax { line: pos.line, col: pos.col, message: message.into() }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(syntax(pos, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }
        let next = chars.get(i + 1).copied();
        let two = |tok: Tok| (tok, 2usize);
        let single = match c {
            '(' => Some((Tok::LParen, 1)),
            ')' => Some((Tok::RParen, 1)),
            '{' => Some((Tok::LBrace, 1)),
            '}' => Some((Tok::RBrace, 1)),
            ',' => Some((Tok::Comma, 1)),
            '.' => Some((Tok::Dot, 1)),
            '+' => Some((Tok::Plus, 1)),
            '*' => Some((Tok::Star, 1)),
            '/' => Some((Tok::Slash, 1)),
            '¬' => Some((Tok::Tilde, 1)),
            '≠' => Some((Tok::Ne, 1)),
            '≤' => Some((Tok::Le, 1)),
            '≥' => Some((Tok::Ge, 1)),
            '←' => Some((Tok::Arrow, 1)),
            '=' if next == Some('<') => Some(two(Tok::Le)),
            '=' => Some((Tok::Eq, 1)),
            '~' if next == Some('=') => Some(two(Tok::Ne)),
            '~' => Some((Tok::Tilde, 1)),
            '!' if next == Some('=') => Some(two(Tok::Ne)),
            '<' if next == Some('-') => Some(two(Tok::Arrow)),
            '<' if next == Some('=') => Some(two(Tok::Le)),
            '<' if next == Some('>') => Some(two(Tok::Ne)),
            '<' => Some((Tok::Lt, 1)),
            '>' if next == Some('=') => Some(two(Tok::Ge)),
            '>' => Some((Tok::Gt, 1)),
            ':' if next == Some('-') => Some(two(Tok::Arrow)),
            ':' if next == Some(':') => Some(two(Tok::ColonColon)),
            ':' => Some((Tok::Colon, 1)),
            '-' => Some((Tok::Minus, 1)),
            _ => None,
        };
        if let Some((tok, n)) = single {
            for _ in 0..n {
                bump!();
            }
            out.push(Token { tok, pos });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i).copied() {
                    None => return Err(syntax(pos, "unterminated quoted constant")),
                    Some(ch) if ch == quote => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        bump!();
                        let esc = chars.get(i).copied().ok_or_else(|| syntax(pos, "unterminated quoted constant"))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        bump!();
                    }
                    Some(ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let is_float = i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit();
            if is_float {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
                let text: String = chars[start..i].iter().collect();
                let f = text.parse::<f64>().map_err(|_| syntax(pos, "bad float literal"))?;
                out.push(Token { tok: Tok::Float(f), pos });
            } else {
                out.push(Token { tok: Tok::Int(chars[start..i].iter().collect()), pos });
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            // Primed variables such as P' used in rewritten rules.
            while i < chars.len() && chars[i] == '\'' && !c.is_lowercase() {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if c.is_uppercase() || c == '_' { Tok::Var(text) } else { Tok::Ident(text) };
            out.push(Token { tok, pos });
            continue;
        }
        return Err(syntax(pos, format!("unexpected character {c:?}")));
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}
