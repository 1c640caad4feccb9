use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{
    ActionKind, ActionLabel, CausalFactor, CausalFactorModel, Constraint, ConstraintKind, Phase,
};

use super::{RiskState, RiskStructure, Scope, Transition, KIND_ORDER, MAX_FACTORS};

/// Interleaving product of phase models under constraints.
pub(crate) struct Composer {
    scope: Scope,
    factors: Vec<CausalFactor>,
    /// `requires[a]`: factors that must be active for `a` to activate.
    requires: Vec<Vec<usize>>,
    /// `blockers[a]`: factors whose activity disables activating `a`.
    blockers: Vec<Vec<usize>>,
    causes: Vec<Vec<usize>>,
    excludes: Vec<(usize, usize)>,
}

impl Composer {
    pub(crate) fn new(factors: Vec<CausalFactor>, constraints: &[Constraint]) -> Result<Self> {
        if factors.len() > MAX_FACTORS {
            return Err(Error::TooManyFactors(factors.len()));
        }
        let scope = Scope::new(factors.iter().map(|f| f.id.clone()).collect());
        let n = factors.len();
        let mut c = Composer {
            scope,
            factors,
            requires: vec![Vec::new(); n],
            blockers: vec![Vec::new(); n],
            causes: vec![Vec::new(); n],
            excludes: Vec::new(),
        };
        for k in constraints {
            let (Some(a), Some(b)) = (c.scope.position(&k.left), c.scope.position(&k.right)) else {
                continue;
            };
            match k.kind {
                ConstraintKind::Requires => c.requires[a].push(b),
                ConstraintKind::Causes => c.causes[a].push(b),
                ConstraintKind::Denies => c.blockers[b].push(a),
                ConstraintKind::Excludes => {
                    c.blockers[b].push(a);
                    c.excludes.push((a, b));
                }
            }
        }
        Ok(c)
    }

    fn for_situation(model: &CausalFactorModel, situation: &str) -> Result<Self> {
        let ids = model.effective_factors(situation)?;
        if ids.len() > MAX_FACTORS {
            return Err(Error::TooManyFactors(ids.len()));
        }
        let factors = ids
            .iter()
            .map(|id| model.factor(id).cloned())
            .collect::<Result<Vec<_>>>()?;
        let constraints: Vec<Constraint> = model.effective_constraints(situation)?.into_iter().collect();
        Self::new(factors, &constraints)
    }

    /// Activates factor `i` in `s` together with everything it causes, then
    /// clears factors excluded by an active factor. `None` if activation of
    /// `i` is disabled in `s`.
    fn try_activate(&self, s: RiskState, i: usize) -> Option<RiskState> {
        if self.requires[i].iter().any(|b| s.phase(*b) != Phase::Active)
            || self.blockers[i].iter().any(|x| s.phase(*x) == Phase::Active)
        {
            return None;
        }
        let mut t = s.with_phase(i, Phase::Active);
        let mut work = vec![i];
        while let Some(a) = work.pop() {
            for &b in &self.causes[a] {
                if t.phase(b) == Phase::Inactive {
                    t = t.with_phase(b, Phase::Active);
                    work.push(b);
                }
            }
        }
        let snapshot = t;
        for &(x, y) in &self.excludes {
            if snapshot.phase(x) == Phase::Active && matches!(t.phase(y), Phase::Active | Phase::Mitigated) {
                t = t.with_phase(y, Phase::Inactive);
            }
        }
        Some(t)
    }

    /// Target of `kind` on factor `i` from `s`, if enabled.
    fn step(&self, s: RiskState, i: usize, kind: ActionKind) -> Option<RiskState> {
        let f = &self.factors[i];
        let p = s.phase(i);
        match kind {
            ActionKind::Activate => match p {
                Phase::Inactive => self.try_activate(s, i),
                Phase::Mitigated if f.re_endanger => self.try_activate(s, i),
                _ => None,
            },
            ActionKind::MishapStep => (p == Phase::Active && f.has_mishap_phase)
                .then(|| s.with_phase(i, Phase::Mishap)),
            ActionKind::StartMitigate => (p == Phase::Active).then(|| s.with_phase(i, Phase::Mitigated)),
            ActionKind::EndMitigate => (p == Phase::Mitigated).then(|| s.with_phase(i, Phase::Inactive)),
            ActionKind::CompleteMitigate => {
                (p == Phase::Active && f.direct).then(|| s.with_phase(i, Phase::Inactive))
            }
        }
    }

    pub(crate) fn explore(&self, situation: &str, initial: RiskState) -> RiskStructure {
        let n = self.factors.len();
        let mut states = vec![initial];
        let mut index: HashMap<RiskState, u32> = HashMap::from([(initial, 0)]);
        let mut raw: Vec<(u32, (usize, ActionKind), u32)> = Vec::new();
        let mut queue = VecDeque::from([0u32]);
        while let Some(si) = queue.pop_front() {
            let s = states[si as usize];
            for i in 0..n {
                for kind in KIND_ORDER {
                    let Some(t) = self.step(s, i, kind) else {
                        continue;
                    };
                    let ti = *index.entry(t).or_insert_with(|| {
                        states.push(t);
                        queue.push_back(states.len() as u32 - 1);
                        states.len() as u32 - 1
                    });
                    raw.push((si, (i, kind), ti));
                }
            }
        }

        let mut labels: BTreeMap<ActionLabel, (usize, ActionKind)> = BTreeMap::new();
        for (_, key, _) in &raw {
            labels
                .entry(ActionLabel::for_factor(&self.factors[key.0], key.1))
                .or_insert(*key);
        }
        let ids: HashMap<(usize, ActionKind), u32> = labels
            .values()
            .enumerate()
            .map(|(i, k)| (*k, i as u32))
            .collect();
        let transitions = raw
            .into_iter()
            .map(|(source, key, target)| Transition {
                source,
                action: ids[&key],
                target,
            })
            .collect();
        RiskStructure::assemble(
            situation.to_string(),
            self.scope.clone(),
            states,
            labels.into_keys().collect(),
            transitions,
        )
    }
}

/// Phase model of a single factor as a risk structure.
pub fn expand_phase_model(factor: &CausalFactor) -> RiskStructure {
    Composer::new(vec![factor.clone()], &[])
        .expect("one factor is within bounds")
        .explore(&factor.id, RiskState::ZERO)
}

/// Risk structure of `situation` reachable from `0`.
pub fn compose_situation(model: &CausalFactorModel, situation: &str) -> Result<RiskStructure> {
    compose_from(model, situation, RiskState::ZERO)
}

/// Risk structure of `situation` reachable from `initial`.
pub fn compose_from(
    model: &CausalFactorModel,
    situation: &str,
    initial: RiskState,
) -> Result<RiskStructure> {
    Ok(Composer::for_situation(model, situation)?.explore(situation, initial))
}

/// Endangerment edges reachable from the initial state, and the states they
/// touch.
pub fn endangerment_subgraph(rs: &RiskStructure) -> RiskStructure {
    let mut new_index: HashMap<u32, u32> = HashMap::from([(0, 0)]);
    let mut order = vec![0u32];
    let mut queue = VecDeque::from([0u32]);
    let mut edges = Vec::new();
    while let Some(s) = queue.pop_front() {
        for t in rs.outgoing(s).iter().filter(|t| rs.label(t).is_endangerment()) {
            let ti = *new_index.entry(t.target).or_insert_with(|| {
                order.push(t.target);
                queue.push_back(t.target);
                order.len() as u32 - 1
            });
            edges.push((new_index[&s], t.action, ti));
        }
    }
    let mut used: Vec<u32> = edges.iter().map(|e| e.1).collect();
    used.sort_unstable();
    used.dedup();
    let remap: HashMap<u32, u32> = used.iter().enumerate().map(|(i, a)| (*a, i as u32)).collect();
    RiskStructure::assemble(
        rs.situation.clone(),
        rs.scope.clone(),
        order.iter().map(|i| rs.states[*i as usize]).collect(),
        used.iter().map(|a| rs.actions[*a as usize].clone()).collect(),
        edges
            .into_iter()
            .map(|(source, a, target)| Transition {
                source,
                action: remap[&a],
                target,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EndangermentClass;

    fn f(id: &str) -> CausalFactor {
        CausalFactor::new(id, EndangermentClass::Failure)
    }

    fn counts(rs: &RiskStructure) -> (usize, usize) {
        (rs.state_count(), rs.transition_count())
    }

    #[test]
    fn phase_model_variants() {
        assert_eq!(counts(&expand_phase_model(&f("cf"))), (3, 3));
        assert_eq!(counts(&expand_phase_model(&f("cf").with_direct())), (3, 4));
        assert_eq!(counts(&expand_phase_model(&f("cf").with_mishap())), (4, 4));
        assert_eq!(
            counts(&expand_phase_model(&f("cf").with_mishap().with_re_endanger())),
            (4, 5)
        );
    }

    #[test]
    fn off_repair_tags_end_mitigation_only() {
        let rs = expand_phase_model(&f("cf").with_off_repair());
        let offline: Vec<_> = rs.edges().filter(|e| e.1.offline).collect();
        assert_eq!(offline.len(), 1);
        assert_eq!(offline[0].1.kind, ActionKind::EndMitigate);
    }

    #[test]
    fn empty_scope_is_single_state() {
        let rs = Composer::new(vec![], &[]).unwrap().explore("s", RiskState::ZERO);
        assert_eq!(counts(&rs), (1, 0));
        assert_eq!(counts(&endangerment_subgraph(&rs)), (1, 0));
    }

    #[test]
    fn requires_shrinks_two_factor_product() {
        let free = Composer::new(vec![f("a"), f("b")], &[]).unwrap().explore("s", RiskState::ZERO);
        assert_eq!(counts(&free), (9, 18));
        let req = Composer::new(
            vec![f("a"), f("b")],
            &[Constraint::new("a", ConstraintKind::Requires, "b")],
        )
        .unwrap()
        .explore("s", RiskState::ZERO);
        // Every phase pair stays reachable (b may be mitigated after a
        // started); only the two unsupported activations of a disappear.
        assert_eq!(counts(&req), (9, 16));
        assert_eq!(counts(&endangerment_subgraph(&free)), (4, 4));
    }

    #[test]
    fn causes_propagates_transitively() {
        let c = Composer::new(
            vec![f("a"), f("b"), f("c")],
            &[
                Constraint::new("a", ConstraintKind::Causes, "b"),
                Constraint::new("b", ConstraintKind::Causes, "c"),
            ],
        )
        .unwrap();
        let t = c.try_activate(RiskState::ZERO, 0).unwrap();
        assert_eq!(t.phases(3).collect::<Vec<_>>(), vec![Phase::Active; 3]);
    }

    #[test]
    fn excludes_clears_and_blocks() {
        let c = Composer::new(
            vec![f("a"), f("b")],
            &[Constraint::new("a", ConstraintKind::Excludes, "b")],
        )
        .unwrap();
        let b_mitigated = RiskState::ZERO.with_phase(1, Phase::Mitigated);
        assert_eq!(
            c.try_activate(b_mitigated, 0),
            Some(RiskState::ZERO.with_phase(0, Phase::Active))
        );
        let a_active = RiskState::ZERO.with_phase(0, Phase::Active);
        assert_eq!(c.try_activate(a_active, 1), None);
    }

    #[test]
    fn mishap_is_absorbing_for_its_factor() {
        let rs = expand_phase_model(&f("cf").with_mishap().with_direct().with_re_endanger());
        let mishap = rs.index_of(RiskState::ZERO.with_phase(0, Phase::Mishap)).unwrap();
        assert!(rs.outgoing(mishap).is_empty());
        let s = rs.stats();
        assert_eq!(s.mishap_state_count, 1);
    }
}
