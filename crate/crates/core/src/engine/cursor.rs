//! Resumable enumeration of rule body solutions.

use std::ops::Range;

use super::compile::{pattern, run_cmp, run_func, unify, unify_all, CRule, CTerm, Frame, Goal};
use crate::store::Relation;
use crate::value::Value;

/// Resolves a predicate name to the relation a goal reads.
pub type Lookup<'a> = dyn Fn(&str) -> Option<&'a Relation> + 'a;

enum Level {
    Positions { pos: Vec<usize>, i: usize, mark: usize },
    Once { tried: bool, mark: usize },
    Values { vals: Vec<Value>, i: usize, mark: usize },
}

impl Level {
    fn mark(&self) -> usize {
        match self {
            Level::Positions { mark, .. } | Level::Once { mark, .. } | Level::Values { mark, .. } => *mark,
        }
    }
}

/// Iterates the solutions of one rule body under fixed goal windows. The
/// cursor can be paused after any solution and resumed later.
pub struct BodyCursor {
    pub frame: Frame,
    ranges: Vec<Option<Range<usize>>>,
    stack: Vec<Level>,
    started: bool,
    done: bool,
}

pub(crate) fn negation_holds(rel: Option<&Relation>, args: &[CTerm], f: &mut Frame) -> bool {
    let Some(rel) = rel else { return true };
    let pat = pattern(args, f);
    !rel.matching_positions(&pat, 0..rel.len()).into_iter().any(|p| {
        let m = f.mark();
        let ok = unify_all(args, rel.get(p).expect("position"), f);
        f.undo(m);
        ok
    })
}

impl BodyCursor {
    pub fn new(cr: &CRule, ranges: Vec<Option<Range<usize>>>) -> BodyCursor {
        BodyCursor { frame: Frame::new(cr.nslots), ranges, stack: Vec::new(), started: false, done: false }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn open(&self, cr: &CRule, gi: usize, lookup: &Lookup<'_>) -> Level {
        let mark = self.frame.mark();
        match &cr.goals[gi] {
            Goal::Atom { pred, args } => {
                let pos = match lookup(pred) {
                    Some(rel) => {
                        let range = self.ranges[gi].clone().unwrap_or(0..rel.len());
                        rel.matching_positions(&pattern(args, &self.frame), range)
                    }
                    None => Vec::new(),
                };
                Level::Positions { pos, i: 0, mark }
            }
            Goal::Func { kind, def, inputs, .. } => {
                Level::Values { vals: run_func(*kind, def, inputs, &self.frame), i: 0, mark }
            }
            Goal::Not { .. } | Goal::Cmp { .. } => Level::Once { tried: false, mark },
        }
    }

    /// Bind the next candidate of the top level; false when it is exhausted.
    fn advance(&mut self, cr: &CRule, lookup: &Lookup<'_>) -> bool {
        let gi = self.stack.len() - 1;
        let mark = self.stack[gi].mark();
        self.frame.undo(mark);
        let level = self.stack.last_mut().expect("level");
        match (level, &cr.goals[gi]) {
            (Level::Positions { pos, i, .. }, Goal::Atom { pred, args }) => {
                let rel = lookup(pred).expect("relation seen at open");
                while *i < pos.len() {
                    let t = rel.get(pos[*i]).expect("position");
                    *i += 1;
                    if unify_all(args, t, &mut self.frame) {
                        return true;
                    }
                    self.frame.undo(mark);
                }
                false
            }
            (Level::Values { vals, i, .. }, Goal::Func { out, .. }) => {
                while *i < vals.len() {
                    let v = vals[*i].clone();
                    *i += 1;
                    if unify(out, &v, &mut self.frame) {
                        return true;
                    }
                    self.frame.undo(mark);
                }
                false
            }
            (Level::Once { tried, .. }, goal) => {
                if *tried {
                    return false;
                }
                *tried = true;
                match goal {
                    Goal::Not { pred, args } => negation_holds(lookup(pred), args, &mut self.frame),
                    Goal::Cmp { op, lhs, rhs } => run_cmp(*op, lhs, rhs, &mut self.frame),
                    _ => false,
                }
            }
            _ => unreachable!("level kind follows goal kind"),
        }
    }

    /// Move to the next solution; the bindings are in [`BodyCursor::frame`].
    pub fn next(&mut self, cr: &CRule, lookup: &Lookup<'_>) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            self.started = true;
            if cr.goals.is_empty() {
                return true;
            }
            let l = self.open(cr, 0, lookup);
            self.stack.push(l);
        } else if cr.goals.is_empty() {
            self.done = true;
            return false;
        }
        loop {
            if self.advance(cr, lookup) {
                if self.stack.len() == cr.goals.len() {
                    return true;
                }
                let l = self.open(cr, self.stack.len(), lookup);
                self.stack.push(l);
            } else {
                let l = self.stack.pop().expect("level");
                self.frame.undo(l.mark());
                if self.stack.is_empty() {
                    self.done = true;
                    return false;
                }
            }
        }
    }
}
