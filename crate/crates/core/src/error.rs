use std::fmt;

use crate::lang::Pos;

/// A compile-time finding attached to a source position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub pos: Option<Pos>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Option<Pos>, message: impl Into<String>) -> Self {
        Diagnostic { pos, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pos {
            Some(p) => write!(f, "{}:{}: {}", p.line, p.col, self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn join(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },

    #[error("arity mismatch for {pred}: used with {found} arguments, expected {expected}")]
    Arity { pred: String, expected: usize, found: usize },

    #[error("{}", join(.0))]
    Analysis(Vec<Diagnostic>),

    #[error("not stratified: cycle through {}", .cycle.join(" -> "))]
    NotStratified { cycle: Vec<String> },

    #[error("unknown predicate {0}")]
    UnknownPredicate(String),

    #[error("unknown aggregate {0}")]
    UnknownAggregate(String),

    #[error("aggregate {0} is already registered")]
    DuplicateAggregate(String),

    #[error("aggregate {name} is incomplete: {reason}")]
    IncompleteAggregate { name: String, reason: String },

    #[error("relation {pred}: {message}")]
    Store { pred: String, message: String },

    #[error("external query failed: {message}\n  while executing: {sql}")]
    Adapter { sql: String, message: String },

    #[error("{path}: {message}")]
    Load { path: String, message: String },

    #[error("step limit reached: no fixpoint after {steps} steps")]
    StepLimit { steps: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
