//! Mitigation planning over risk structures.
//!
//! A state is *coverable* if a path of run-time mitigations leads from it to
//! `0`. Off-line mitigations (end-mitigations of `offRepair` factors) are
//! considered separately: states that can only be unwound with them need
//! the vehicle taken out of service.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActionLabel, FactorId, Phase};
use crate::risk::{RiskState, RiskStructure, Scope, Transition};

const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MitigationPlan {
    pub from: RiskState,
    pub actions: Vec<ActionLabel>,
    pub to: RiskState,
}

impl MitigationPlan {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn runtime_mitigation(rs: &RiskStructure, t: &Transition) -> bool {
    let l = rs.label(t);
    l.is_mitigation() && !l.offline
}

fn any_mitigation(rs: &RiskStructure, t: &Transition) -> bool {
    rs.label(t).is_mitigation()
}

/// Length of the shortest path to `0` using edges accepted by `keep`, per
/// state index; `UNREACHABLE` where there is none.
fn distances_to_zero(rs: &RiskStructure, keep: impl Fn(&RiskStructure, &Transition) -> bool) -> Vec<u32> {
    let n = rs.state_count();
    let mut dist = vec![UNREACHABLE; n];
    let Some(zero) = rs.index_of(RiskState::ZERO) else {
        return dist;
    };
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in rs.transitions.iter().filter(|t| keep(rs, t)) {
        preds[t.target as usize].push(t.source);
    }
    dist[zero as usize] = 0;
    let mut queue = VecDeque::from([zero]);
    while let Some(v) = queue.pop_front() {
        for &u in &preds[v as usize] {
            if dist[u as usize] == UNREACHABLE {
                dist[u as usize] = dist[v as usize] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Shortest run-time mitigation sequence from `state` to `0`. Among equally
/// short plans, each step takes the smallest `(factor, kind)` action.
pub fn plan_from(rs: &RiskStructure, state: RiskState) -> Result<Option<MitigationPlan>> {
    let start = rs
        .index_of(state)
        .ok_or_else(|| Error::UnknownState(rs.scope.label(state)))?;
    let dist = distances_to_zero(rs, runtime_mitigation);
    if dist[start as usize] == UNREACHABLE {
        return Ok(None);
    }
    let mut actions = Vec::new();
    let mut cur = start;
    while dist[cur as usize] > 0 {
        let want = dist[cur as usize] - 1;
        let next = rs
            .outgoing(cur)
            .iter()
            .filter(|t| runtime_mitigation(rs, t) && dist[t.target as usize] == want)
            .min_by(|a, b| {
                let (la, lb) = (rs.label(a), rs.label(b));
                (&la.factor, la.kind).cmp(&(&lb.factor, lb.kind))
            })
            .expect("a state at finite distance has a closer successor");
        actions.push(rs.label(next).clone());
        cur = next.target;
    }
    Ok(Some(MitigationPlan {
        from: state,
        actions,
        to: rs.states[cur as usize],
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Maximum number of cycles listed.
    pub cycle_cap: usize,
    /// Maximum number of search steps spent on cycle enumeration.
    pub cycle_search_budget: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            cycle_cap: 100,
            cycle_search_budget: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyReport {
    /// States with a run-time mitigation path to `0`, including `0`.
    pub coverable: Vec<RiskState>,
    /// States with no mitigation path to `0` at all.
    pub stranded: Vec<RiskState>,
    /// States that reach `0` only with off-line mitigations.
    pub off_repair_only: Vec<RiskState>,
    /// Simple cycles mixing endangerments and mitigations, as state
    /// sequences starting at their earliest discovered state.
    pub cycles: Vec<Vec<RiskState>>,
    /// Set when cycle enumeration hit the cap or the search budget.
    pub truncated: bool,
}

pub fn strategy_report(rs: &RiskStructure, opts: &ReportOptions) -> StrategyReport {
    let runtime = distances_to_zero(rs, runtime_mitigation);
    let all = distances_to_zero(rs, any_mitigation);
    let mut report = StrategyReport {
        coverable: Vec::new(),
        stranded: Vec::new(),
        off_repair_only: Vec::new(),
        cycles: Vec::new(),
        truncated: false,
    };
    for (i, s) in rs.states.iter().enumerate() {
        if runtime[i] != UNREACHABLE {
            report.coverable.push(*s);
        } else if all[i] != UNREACHABLE {
            report.off_repair_only.push(*s);
        } else {
            report.stranded.push(*s);
        }
    }
    let (cycles, truncated) = mixed_cycles(rs, opts);
    report.cycles = cycles;
    report.truncated = truncated;
    report
}

const RED: u8 = 1;
const GREEN: u8 = 2;

/// Simple cycles that can be traversed using at least one endangerment and
/// at least one mitigation. Each cycle is enumerated once, from its state
/// with the smallest index.
fn mixed_cycles(rs: &RiskStructure, opts: &ReportOptions) -> (Vec<Vec<RiskState>>, bool) {
    let n = rs.state_count();
    // Successors with the colours available on each state pair.
    let mut succ: Vec<Vec<(u32, u8)>> = vec![Vec::new(); n];
    for t in &rs.transitions {
        if t.source == t.target {
            continue;
        }
        let colour = if rs.label(t).is_endangerment() { RED } else { GREEN };
        let list = &mut succ[t.source as usize];
        match list.iter_mut().find(|(v, _)| *v == t.target) {
            Some((_, c)) => *c |= colour,
            None => list.push((t.target, colour)),
        }
    }

    let mut cycles = Vec::new();
    let mut budget = opts.cycle_search_budget;
    let mut on_path = vec![false; n];
    for start in 0..n as u32 {
        // Depth-first search over states with index above `start`.
        let mut path: Vec<u32> = vec![start];
        let mut colours: Vec<u8> = Vec::new();
        let mut cursor: Vec<usize> = vec![0];
        on_path[start as usize] = true;
        while let Some(&v) = path.last() {
            let pos = cursor.last_mut().expect("cursor tracks path");
            let Some(&(w, c)) = succ[v as usize].get(*pos) else {
                on_path[v as usize] = false;
                path.pop();
                cursor.pop();
                colours.pop();
                continue;
            };
            *pos += 1;
            if budget == 0 {
                for s in &path {
                    on_path[*s as usize] = false;
                }
                return (cycles, true);
            }
            budget -= 1;
            if w == start {
                let mut all = c;
                for x in &colours {
                    all |= x;
                }
                if path.len() >= 2 && all == RED | GREEN {
                    if cycles.len() == opts.cycle_cap {
                        for s in &path {
                            on_path[*s as usize] = false;
                        }
                        return (cycles, true);
                    }
                    cycles.push(path.iter().map(|i| rs.states[*i as usize]).collect());
                }
            } else if w > start && !on_path[w as usize] {
                on_path[w as usize] = true;
                path.push(w);
                cursor.push(0);
                colours.push(c);
            }
        }
    }
    (cycles, false)
}

fn weight_of(weights: &BTreeMap<FactorId, f64>, factor: &str) -> f64 {
    weights.get(factor).copied().unwrap_or(1.0)
}

/// Weighted risk of a state: active factors count once, factors in mishap
/// twice. Factors without a weight count 1.
pub fn risk_value(scope: &Scope, state: RiskState, weights: &BTreeMap<FactorId, f64>) -> f64 {
    scope
        .factors()
        .iter()
        .enumerate()
        .map(|(i, f)| match state.phase(i) {
            Phase::Active => weight_of(weights, f),
            Phase::Mishap => 2.0 * weight_of(weights, f),
            _ => 0.0,
        })
        .sum()
}

/// States whose risk value exceeds `budget`, in state order.
pub fn check_budget(
    rs: &RiskStructure,
    weights: &BTreeMap<FactorId, f64>,
    budget: f64,
) -> Result<Vec<RiskState>> {
    if let Some((f, w)) = weights.iter().find(|(_, w)| w.is_nan() || **w < 0.0) {
        return Err(Error::InvalidArgument(format!("weight {w} of '{f}' is negative or not a number")));
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::InvalidArgument(format!("budget {budget} is negative or not a number")));
    }
    Ok(rs
        .states
        .iter()
        .copied()
        .filter(|s| risk_value(&rs.scope, *s, weights) > budget)
        .collect())
}
