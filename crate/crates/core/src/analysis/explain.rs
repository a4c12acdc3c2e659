use std::fmt::Write;

use super::foe::foe_transform;
use super::Analysis;
use crate::error::{Error, Result};
use crate::lang::{print_program, Program};

pub fn explain_strata(a: &Analysis) -> String {
    let mut out = a.strata.to_string();
    for c in &a.components {
        if let Some(x) = c.xy() {
            let names: Vec<&str> = x.preds.iter().map(|p| &**p).collect();
            let _ = writeln!(out, "XY program {{{}}}, bistate strata:", names.join(", "));
            for line in x.strata.to_string().lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
    }
    out
}

/// First-order rules for the choice rules defining `pred`.
pub fn explain_foe(a: &Analysis, pred: &str) -> Result<String> {
    let source = Program { rules: a.program.rules.clone(), ..Program::default() };
    let foe = foe_transform(&source);
    let mut picked = Program::default();
    let mut i = 0;
    for r in &source.rules {
        let n = if r.has_choice() { 2 + r.body.iter().filter_map(|l| match l {
            crate::lang::Literal::Choice { right, .. } => Some(right.len()),
            _ => None,
        }).sum::<usize>() } else { 1 };
        if &*r.head.pred == pred {
            picked.rules.extend(foe.rules[i..i + n].iter().cloned());
        }
        i += n;
    }
    if picked.rules.is_empty() {
        return Err(Error::UnknownPredicate(pred.to_string()));
    }
    Ok(print_program(&picked))
}

pub fn explain_bistate(a: &Analysis, pred: &str) -> Result<String> {
    let x = a.xy_of(pred).ok_or_else(|| Error::UnknownPredicate(format!("{pred} (not part of an XY program)")))?;
    Ok(print_program(&x.bistate_program()))
}

pub fn explain_syncbi(a: &Analysis, pred: &str) -> Result<String> {
    let x = a.xy_of(pred).ok_or_else(|| Error::UnknownPredicate(format!("{pred} (not part of an XY program)")))?;
    Ok(print_program(&x.syncbi_program()))
}
