//! Risk states and risk structures.
//!
//! A risk state assigns a phase to every factor in scope of a situation.
//! States are packed into a `u64`, two bits per factor, in the order of the
//! situation's [`Scope`]. A [`RiskStructure`] is the labelled transition
//! system reachable from an initial state (normally `0`, all inactive).

mod compose;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActionKind, ActionLabel, FactorId, Phase, SituationId};

pub use compose::{compose_from, compose_situation, endangerment_subgraph, expand_phase_model};

/// Largest number of factors in scope of one situation.
pub const MAX_FACTORS: usize = 32;

/// Factors in scope of a situation, in model declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Scope {
    factors: Vec<FactorId>,
}

impl Scope {
    pub fn new(factors: Vec<FactorId>) -> Self {
        Scope { factors }
    }

    pub fn factors(&self) -> &[FactorId] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn position(&self, factor: &str) -> Option<usize> {
        self.factors.iter().position(|f| f == factor)
    }

    /// Compact label: inactive factors omitted, active ones by id, mitigated
    /// prefixed `~`, mishap prefixed `_`; `0` if nothing is set.
    pub fn label(&self, state: RiskState) -> String {
        if state.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, f) in self.factors.iter().enumerate() {
            match state.phase(i) {
                Phase::Inactive => continue,
                Phase::Active => {}
                Phase::Mitigated => out.push('~'),
                Phase::Mishap => out.push('_'),
            }
            out.push_str(f);
        }
        out
    }

    /// Ids of the active factors, concatenated; `0` if there are none.
    pub fn active_label(&self, state: RiskState) -> String {
        let s: String = self
            .factors
            .iter()
            .enumerate()
            .filter(|(i, _)| state.phase(*i) == Phase::Active)
            .map(|(_, f)| f.as_str())
            .collect();
        if s.is_empty() {
            "0".to_string()
        } else {
            s
        }
    }

    /// Comma separated form accepted by [`Scope::parse_state`].
    pub fn state_spec(&self, state: RiskState) -> String {
        if state.is_zero() {
            return "0".to_string();
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .enumerate()
            .filter(|(i, _)| state.phase(*i) != Phase::Inactive)
            .map(|(i, f)| format!("{}{f}", prefix(state.phase(i))))
            .collect();
        parts.join(",")
    }

    /// Parses `A,~B,_C` (A active, B mitigated, C in mishap, others
    /// inactive). `0` and the empty string denote the all-inactive state.
    pub fn parse_state(&self, spec: &str) -> Result<RiskState> {
        let spec = spec.trim();
        let mut state = RiskState::ZERO;
        if spec.is_empty() || spec == "0" {
            return Ok(state);
        }
        for part in spec.split(',').map(str::trim) {
            let (phase, id) = if let Some(id) = part.strip_prefix('~') {
                (Phase::Mitigated, id)
            } else if let Some(id) = part.strip_prefix('_') {
                (Phase::Mishap, id)
            } else {
                (Phase::Active, part)
            };
            let i = self
                .position(id)
                .ok_or_else(|| Error::UnknownFactor(id.to_string()))?;
            if state.phase(i) != Phase::Inactive {
                return Err(Error::InvalidArgument(format!(
                    "factor '{id}' given twice in state '{spec}'"
                )));
            }
            state = state.with_phase(i, phase);
        }
        Ok(state)
    }
}

fn prefix(p: Phase) -> &'static str {
    match p {
        Phase::Mitigated => "~",
        Phase::Mishap => "_",
        _ => "",
    }
}

/// Phase assignment over a [`Scope`]. Factors beyond the scope are inactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct RiskState(u64);

impl RiskState {
    pub const ZERO: RiskState = RiskState(0);

    pub fn from_bits(bits: u64) -> Self {
        RiskState(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn phase(self, i: usize) -> Phase {
        match (self.0 >> (2 * i)) & 3 {
            0 => Phase::Inactive,
            1 => Phase::Active,
            2 => Phase::Mitigated,
            _ => Phase::Mishap,
        }
    }

    #[must_use]
    pub fn with_phase(self, i: usize, p: Phase) -> Self {
        let code = match p {
            Phase::Inactive => 0,
            Phase::Active => 1,
            Phase::Mitigated => 2,
            Phase::Mishap => 3,
        };
        RiskState((self.0 & !(3 << (2 * i))) | (code << (2 * i)))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Number of factors (among the first `n`) that are active or in mishap.
    pub fn endangered_count(self, n: usize) -> usize {
        (0..n).filter(|i| self.phase(*i).is_endangered()).count()
    }

    pub fn phases(self, n: usize) -> impl Iterator<Item = Phase> {
        (0..n).map(move |i| self.phase(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub source: u32,
    pub action: u32,
    pub target: u32,
}

/// Explicit risk structure of one situation.
///
/// `states[0]` is the initial state; states are numbered in breadth-first
/// discovery order, actions are sorted, and transitions are sorted by
/// `(source, action, target)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskStructure {
    pub situation: SituationId,
    pub scope: Scope,
    pub states: Vec<RiskState>,
    pub actions: Vec<ActionLabel>,
    pub transitions: Vec<Transition>,
    index: HashMap<RiskState, u32>,
    offsets: Vec<u32>,
}

impl RiskStructure {
    pub(crate) fn assemble(
        situation: SituationId,
        scope: Scope,
        states: Vec<RiskState>,
        actions: Vec<ActionLabel>,
        mut transitions: Vec<Transition>,
    ) -> Self {
        transitions.sort_unstable();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u32))
            .collect();
        let mut offsets = vec![0u32; states.len() + 1];
        for t in &transitions {
            offsets[t.source as usize + 1] += 1;
        }
        for i in 0..states.len() {
            offsets[i + 1] += offsets[i];
        }
        RiskStructure {
            situation,
            scope,
            states,
            actions,
            transitions,
            index,
            offsets,
        }
    }

    pub fn initial(&self) -> RiskState {
        self.states[0]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn index_of(&self, state: RiskState) -> Option<u32> {
        self.index.get(&state).copied()
    }

    pub fn contains(&self, state: RiskState) -> bool {
        self.index.contains_key(&state)
    }

    pub fn outgoing(&self, state: u32) -> &[Transition] {
        let (a, b) = (
            self.offsets[state as usize] as usize,
            self.offsets[state as usize + 1] as usize,
        );
        &self.transitions[a..b]
    }

    pub fn label(&self, t: &Transition) -> &ActionLabel {
        &self.actions[t.action as usize]
    }

    pub fn state_label(&self, state: u32) -> String {
        self.scope.label(self.states[state as usize])
    }

    /// `(source, label, target)` triples in transition order.
    pub fn edges(&self) -> impl Iterator<Item = (RiskState, &ActionLabel, RiskState)> + '_ {
        self.transitions.iter().map(|t| {
            (
                self.states[t.source as usize],
                &self.actions[t.action as usize],
                self.states[t.target as usize],
            )
        })
    }

    pub fn stats(&self) -> StructureStats {
        let endangerments = self
            .transitions
            .iter()
            .filter(|t| self.label(t).is_endangerment())
            .count();
        let n = self.scope.len();
        StructureStats {
            state_count: self.states.len(),
            transition_count: self.transitions.len(),
            endangerment_count: endangerments,
            mitigation_count: self.transitions.len() - endangerments,
            mishap_state_count: self
                .states
                .iter()
                .filter(|s| s.phases(n).any(|p| p == Phase::Mishap))
                .count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructureStats {
    pub state_count: usize,
    pub transition_count: usize,
    pub endangerment_count: usize,
    pub mitigation_count: usize,
    pub mishap_state_count: usize,
}

impl fmt::Display for StructureStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "states={} transitions={} endangerments={} mitigations={} mishap_states={}",
            self.state_count,
            self.transition_count,
            self.endangerment_count,
            self.mitigation_count,
            self.mishap_state_count
        )
    }
}

pub fn stats(rs: &RiskStructure) -> StructureStats {
    rs.stats()
}

/// Order in which a factor's actions are tried; also the tie-break order of
/// the planner.
pub(crate) const KIND_ORDER: [ActionKind; 5] = ActionKind::ALL;

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> Scope {
        Scope::new(vec!["A".into(), "B".into(), "nC".into()])
    }

    #[test]
    fn packing_round_trips_every_phase() {
        for (i, p) in Phase::ALL.into_iter().enumerate() {
            let s = RiskState::ZERO.with_phase(31, p).with_phase(i, Phase::Mitigated);
            assert_eq!(s.phase(31), p);
            assert_eq!(s.phase(i), Phase::Mitigated);
            assert_eq!(s.with_phase(31, Phase::Inactive).with_phase(i, Phase::Inactive), RiskState::ZERO);
        }
    }

    #[test]
    fn labels() {
        let sc = scope();
        let s = RiskState::ZERO
            .with_phase(0, Phase::Active)
            .with_phase(1, Phase::Mitigated)
            .with_phase(2, Phase::Mishap);
        assert_eq!(sc.label(RiskState::ZERO), "0");
        assert_eq!(sc.label(s), "A~B_nC");
        assert_eq!(sc.active_label(s), "A");
        assert_eq!(sc.state_spec(s), "A,~B,_nC");
        assert_eq!(sc.parse_state("A,~B,_nC").unwrap(), s);
        assert_eq!(sc.parse_state("0").unwrap(), RiskState::ZERO);
    }

    #[test]
    fn bad_state_specs() {
        let sc = scope();
        assert!(matches!(sc.parse_state("X"), Err(Error::UnknownFactor(_))));
        assert!(matches!(sc.parse_state("A,~A"), Err(Error::InvalidArgument(_))));
    }
}
