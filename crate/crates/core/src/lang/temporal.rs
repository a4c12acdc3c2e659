use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Diagnostic, Error, Result};
use crate::value::Value;

use super::{HeadArg, Literal, Rule, Term, Var};

/// The temporal term found in argument position 1 of a recursive atom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TemporalTerm {
    /// A ground step number such as the `0` of an exit rule.
    Const(u64),
    /// `J` (offset 0) or `J+1` (offset 1).
    Var(Var, u8),
}

impl TemporalTerm {
    pub fn offset(&self) -> u8 {
        match self {
            TemporalTerm::Const(_) => 0,
            TemporalTerm::Var(_, o) => *o,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalInfo {
    /// Zero-based argument index; always 0.
    pub position: usize,
    pub head: TemporalTerm,
    /// Temporal term for each recursive body atom, keyed by literal index.
    pub body: Vec<(usize, TemporalTerm)>,
}

fn classify_term(t: &Term) -> Option<TemporalTerm> {
    match t {
        Term::Var(v) => Some(TemporalTerm::Var(v.clone(), 0)),
        Term::Temporal(v, o) => Some(TemporalTerm::Var(v.clone(), *o)),
        Term::Const(Value::Int(i)) if *i >= 0 => Some(TemporalTerm::Const(*i as u64)),
        _ => None,
    }
}

fn check_offset(r: &Rule, t: &TemporalTerm) -> Result<()> {
    if t.offset() > 1 {
        return Err(Error::Analysis(vec![Diagnostic::new(
            Some(r.pos),
            format!("not an XY rule: temporal offset +{} in rule for {}", t.offset(), r.head.pred),
        )]));
    }
    Ok(())
}

/// Locate the temporal argument of a rule whose head belongs to `clique`.
///
/// Returns `None` when position 1 of the head or of some recursive body atom
/// is not a variable, successor term or step constant.
pub fn temporal_argument(r: &Rule, clique: &BTreeSet<Arc<str>>) -> Result<Option<TemporalInfo>> {
    if !clique.contains(&r.head.pred) {
        return Ok(None);
    }
    let head = match r.head.args.first() {
        Some(HeadArg::Term(t)) => match classify_term(t) {
            Some(t) => t,
            None => return Ok(None),
        },
        _ => return Ok(None),
    };
    check_offset(r, &head)?;
    let mut body = Vec::new();
    for (i, l) in r.body.iter().enumerate() {
        let Literal::Atom { atom, .. } = l else { continue };
        if !clique.contains(&atom.pred) {
            continue;
        }
        let Some(t) = atom.args.first().and_then(classify_term) else {
            return Ok(None);
        };
        check_offset(r, &t)?;
        body.push((i, t));
    }
    Ok(Some(TemporalInfo { position: 0, head, body }))
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    fn clique() -> BTreeSet<Arc<str>> {
        ["delta_anc", "all_anc"].into_iter().map(Arc::from).collect()
    }

    #[test]
    fn example_rules() {
        let p = parse_program(
            "delta_anc(J+1, Y) <- delta_anc(J, X), parent(Y, X), ~all_anc(J, Y).
             all_anc(J, X) <- delta_anc(J, X).
             anc(X, Y) <- parent(X, Y).",
        )
        .unwrap();
        let r2 = temporal_argument(&p.rules[0], &clique()).unwrap().unwrap();
        assert_eq!(r2.head.offset(), 1);
        assert_eq!(r2.body.len(), 2);
        assert!(r2.body.iter().all(|(_, t)| t.offset() == 0));
        let r4 = temporal_argument(&p.rules[1], &clique()).unwrap().unwrap();
        assert_eq!((r4.head.offset(), r4.body[0].1.offset()), (0, 0));
        assert_eq!(temporal_argument(&p.rules[2], &clique()).unwrap(), None);
    }

    #[test]
    fn large_offsets_are_not_xy() {
        let p = parse_program("all_anc(J+2, X) <- all_anc(J, X).").unwrap();
        assert!(temporal_argument(&p.rules[0], &clique()).is_err());
    }
}
