//! Temporal formulas over risk-state traces.
//!
//! Constraints translate into linear-time formulas; traces drawn from a
//! risk structure can then be checked against them. Evaluation uses
//! finite-trace semantics: `U` and `F` are strong at the end of a trace,
//! `W` is weak.

mod parse;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Constraint, ConstraintKind, FactorId, Phase};
use crate::risk::{RiskState, RiskStructure, Scope};

pub use parse::parse_formula;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    /// The factor is in the given phase.
    Atom(FactorId, Phase),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Always(Box<Formula>),
    Eventually(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    WeakUntil(Box<Formula>, Box<Formula>),
    /// Held at some position up to and including the current one.
    Once(Box<Formula>),
}

impl Formula {
    pub fn active(f: &str) -> Self {
        Formula::Atom(f.to_string(), Phase::Active)
    }

    pub fn inactive(f: &str) -> Self {
        Formula::Atom(f.to_string(), Phase::Inactive)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    pub fn weak_until(l: Formula, r: Formula) -> Self {
        Formula::WeakUntil(Box::new(l), Box::new(r))
    }

    pub fn once(f: Formula) -> Self {
        Formula::Once(Box::new(f))
    }

    /// Factors mentioned by atoms, in order of first occurrence.
    pub fn factors(&self) -> Vec<&FactorId> {
        let mut out = Vec::new();
        self.collect_factors(&mut out);
        out
    }

    fn collect_factors<'a>(&'a self, out: &mut Vec<&'a FactorId>) {
        match self {
            Formula::Const(_) => {}
            Formula::Atom(f, _) => {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
            Formula::Not(a) | Formula::Always(a) | Formula::Eventually(a) | Formula::Once(a) => {
                a.collect_factors(out)
            }
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Until(a, b)
            | Formula::WeakUntil(a, b) => {
                a.collect_factors(out);
                b.collect_factors(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Until(..) | Formula::WeakUntil(..) => 4,
            Formula::Not(_) | Formula::Always(_) | Formula::Eventually(_) | Formula::Once(_) => 5,
            Formula::Const(_) | Formula::Atom(..) => 6,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Formula, min: u8) -> fmt::Result {
    if e.precedence() < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        let (op, l, r, left_assoc) = match self {
            Formula::Const(b) => return write!(f, "{b}"),
            Formula::Atom(x, phase) => {
                let name = match phase {
                    Phase::Inactive => "inactive",
                    Phase::Active => "active",
                    Phase::Mitigated => "mitigated",
                    Phase::Mishap => "mishap",
                };
                return write!(f, "{name}({x})");
            }
            Formula::Not(a) | Formula::Always(a) | Formula::Eventually(a) | Formula::Once(a) => {
                let op = match self {
                    Formula::Not(_) => "!",
                    Formula::Always(_) => "G ",
                    Formula::Eventually(_) => "F ",
                    _ => "O ",
                };
                f.write_str(op)?;
                return write_operand(f, a, p);
            }
            Formula::Implies(a, b) => ("->", a, b, false),
            Formula::Or(a, b) => ("|", a, b, true),
            Formula::And(a, b) => ("&", a, b, true),
            Formula::Until(a, b) => ("U", a, b, false),
            Formula::WeakUntil(a, b) => ("W", a, b, false),
        };
        let (lmin, rmin) = if left_assoc { (p, p + 1) } else { (p + 1, p) };
        write_operand(f, l, lmin)?;
        write!(f, " {op} ")?;
        write_operand(f, r, rmin)
    }
}

/// Temporal reading of a constraint between `left` and `right`.
///
/// `requires` says that whenever the left factor is active, the right one
/// is active now or was active before.
pub fn constraint_to_formula(c: &Constraint) -> Formula {
    let a = || Formula::active(&c.left);
    let leaves = || Formula::not(a());
    match c.kind {
        ConstraintKind::Requires => Formula::always(Formula::implies(a(), Formula::once(Formula::active(&c.right)))),
        ConstraintKind::Causes => Formula::always(Formula::implies(
            a(),
            Formula::eventually(Formula::until(Formula::active(&c.right), leaves())),
        )),
        ConstraintKind::Denies => Formula::always(Formula::implies(
            a(),
            Formula::eventually(Formula::until(Formula::not(Formula::active(&c.right)), leaves())),
        )),
        ConstraintKind::Excludes => Formula::always(Formula::implies(
            a(),
            Formula::eventually(Formula::until(Formula::inactive(&c.right), leaves())),
        )),
    }
}

/// Conjunction of the translations, `true` for no constraints.
pub fn constraints_to_formula<'a>(cs: impl IntoIterator<Item = &'a Constraint>) -> Formula {
    cs.into_iter()
        .map(constraint_to_formula)
        .reduce(Formula::and)
        .unwrap_or(Formula::Const(true))
}

/// `first` globally precedes `second`: if `second` ever becomes active, then
/// `first` is active at some earlier point where `second` is not yet.
pub fn globally_precedes(first: &str, second: &str) -> Formula {
    let b = || Formula::active(second);
    Formula::implies(
        Formula::eventually(b()),
        Formula::until(
            Formula::not(b()),
            Formula::and(Formula::active(first), Formula::not(b())),
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceVerdict {
    pub holds: bool,
    /// First violating position; `None` iff the formula holds.
    pub witness_index: Option<usize>,
}

/// Truth value of `f` at every position of `trace`.
pub fn evaluate(f: &Formula, scope: &Scope, trace: &[RiskState]) -> Result<Vec<bool>> {
    let n = trace.len();
    Ok(match f {
        Formula::Const(b) => vec![*b; n],
        Formula::Atom(x, phase) => {
            let i = scope
                .position(x)
                .ok_or_else(|| Error::UnknownFactor(x.clone()))?;
            trace.iter().map(|s| s.phase(i) == *phase).collect()
        }
        Formula::Not(a) => evaluate(a, scope, trace)?.into_iter().map(|v| !v).collect(),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let (x, y) = (evaluate(a, scope, trace)?, evaluate(b, scope, trace)?);
            x.into_iter()
                .zip(y)
                .map(|(x, y)| match f {
                    Formula::And(..) => x && y,
                    Formula::Or(..) => x || y,
                    _ => !x || y,
                })
                .collect()
        }
        Formula::Always(a) | Formula::Eventually(a) => {
            let mut v = evaluate(a, scope, trace)?;
            let all = matches!(f, Formula::Always(_));
            for i in (0..n.saturating_sub(1)).rev() {
                v[i] = if all { v[i] && v[i + 1] } else { v[i] || v[i + 1] };
            }
            v
        }
        Formula::Once(a) => {
            let mut v = evaluate(a, scope, trace)?;
            for i in 1..n {
                v[i] = v[i] || v[i - 1];
            }
            v
        }
        Formula::Until(a, b) | Formula::WeakUntil(a, b) => {
            let (x, y) = (evaluate(a, scope, trace)?, evaluate(b, scope, trace)?);
            let weak = matches!(f, Formula::WeakUntil(..));
            let mut v = vec![false; n];
            for i in (0..n).rev() {
                let rest = if i + 1 < n { v[i + 1] } else { weak };
                v[i] = y[i] || (x[i] && rest);
            }
            v
        }
    })
}

fn witness(f: &Formula, scope: &Scope, trace: &[RiskState]) -> Result<usize> {
    match f {
        Formula::Always(body) => Ok(evaluate(body, scope, trace)?
            .iter()
            .position(|v| !v)
            .unwrap_or(0)),
        Formula::And(a, b) => {
            let mut best: Option<usize> = None;
            for part in [a, b] {
                if !evaluate(part, scope, trace)?[0] {
                    let w = witness(part, scope, trace)?;
                    best = Some(best.map_or(w, |x| x.min(w)));
                }
            }
            Ok(best.unwrap_or(0))
        }
        _ => Ok(0),
    }
}

/// Checks `f` at the start of `trace`. On failure the witness is the first
/// position where the body of the outermost `G` fails (the earliest among
/// failing conjuncts), or `0` for other formulas.
pub fn check_trace(f: &Formula, scope: &Scope, trace: &[RiskState]) -> Result<TraceVerdict> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let holds = evaluate(f, scope, trace)?[0];
    Ok(TraceVerdict {
        holds,
        witness_index: if holds { None } else { Some(witness(f, scope, trace)?) },
    })
}

/// Uniform random walks from the initial state. Each walk has `max_len`
/// states unless it reaches a state without successors first.
pub fn random_walks(rs: &RiskStructure, walks: usize, max_len: usize, seed: u64) -> Vec<Vec<RiskState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..walks)
        .map(|_| {
            let mut cur = 0u32;
            let mut trace = vec![rs.states[0]];
            while trace.len() < max_len {
                let out = rs.outgoing(cur);
                if out.is_empty() {
                    break;
                }
                cur = out[rng.gen_range(0..out.len() as u64) as usize].target;
                trace.push(rs.states[cur as usize]);
            }
            trace
        })
        .collect()
}

pub fn check_structure(
    rs: &RiskStructure,
    f: &Formula,
    walks: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<TraceVerdict>> {
    if walks < 1 || max_len < 1 {
        return Err(Error::InvalidArgument("walks and length must be at least 1".into()));
    }
    random_walks(rs, walks, max_len, seed)
        .iter()
        .map(|t| check_trace(f, &rs.scope, t))
        .collect()
}
