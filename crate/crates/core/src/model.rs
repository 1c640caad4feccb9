//! Causal factor models.
//!
//! A model declares causal factors (each with its phase model flags), the
//! situations of the driving process together with the factors relevant in
//! them, binary constraints between factors, and the process definitions
//! that tie situations together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{self, ProcessExpr};

pub type FactorId = String;
pub type SituationId = String;
pub type ProcessName = String;

/// Phase of a single causal factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Phase {
    Inactive,
    Active,
    Mitigated,
    Mishap,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Inactive,
        Phase::Active,
        Phase::Mitigated,
        Phase::Mishap,
    ];

    /// Whether the phase counts towards the endangerment level of a state.
    pub fn is_endangered(self) -> bool {
        matches!(self, Phase::Active | Phase::Mishap)
    }

    /// Plain-text marker placed in front of a factor symbol in state labels.
    pub fn marker(self) -> &'static str {
        match self {
            Phase::Inactive => "0^",
            Phase::Active => "",
            Phase::Mitigated => "~",
            Phase::Mishap => "_",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EndangermentClass {
    Failure,
    Disturbance,
    Misuse,
    NearMishap,
}

impl EndangermentClass {
    pub const ALL: [EndangermentClass; 4] = [
        EndangermentClass::Failure,
        EndangermentClass::Disturbance,
        EndangermentClass::Misuse,
        EndangermentClass::NearMishap,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            EndangermentClass::Failure => "f",
            EndangermentClass::Disturbance => "d",
            EndangermentClass::Misuse => "mu",
            EndangermentClass::NearMishap => "nm",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.symbol() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MitigationClass {
    FailSafe,
    Deescalation,
    Protection,
    Uncontrolled,
    Repair,
}

impl MitigationClass {
    pub const ALL: [MitigationClass; 5] = [
        MitigationClass::FailSafe,
        MitigationClass::Deescalation,
        MitigationClass::Protection,
        MitigationClass::Uncontrolled,
        MitigationClass::Repair,
    ];

    /// DSL keyword.
    pub fn keyword(self) -> &'static str {
        match self {
            MitigationClass::FailSafe => "failSafe",
            MitigationClass::Deescalation => "deescalation",
            MitigationClass::Protection => "protection",
            MitigationClass::Uncontrolled => "uncontrolled",
            MitigationClass::Repair => "repair",
        }
    }

    /// Short form used in edge labels, e.g. `prt` in `prt^C_alv`.
    pub fn abbrev(self) -> &'static str {
        match self {
            MitigationClass::FailSafe => "fs",
            MitigationClass::Deescalation => "dsc",
            MitigationClass::Protection => "prt",
            MitigationClass::Uncontrolled => "unc",
            MitigationClass::Repair => "rep",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.keyword() == s)
    }

    /// Mitigation class assumed when a factor declares none: failures are met
    /// by fail-safe reactions, disturbances by deescalation, misuse and
    /// near-mishaps by protection.
    pub fn default_for(class: EndangermentClass) -> Self {
        match class {
            EndangermentClass::Failure => MitigationClass::FailSafe,
            EndangermentClass::Disturbance => MitigationClass::Deescalation,
            EndangermentClass::Misuse | EndangermentClass::NearMishap => {
                MitigationClass::Protection
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ActionKind {
    Activate,
    MishapStep,
    StartMitigate,
    EndMitigate,
    CompleteMitigate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Activate,
        ActionKind::MishapStep,
        ActionKind::StartMitigate,
        ActionKind::EndMitigate,
        ActionKind::CompleteMitigate,
    ];

    pub fn is_endangerment(self) -> bool {
        matches!(self, ActionKind::Activate | ActionKind::MishapStep)
    }

    pub fn is_mitigation(self) -> bool {
        !self.is_endangerment()
    }

    /// Phase change of the labeled factor: `(from, to)` pairs this kind may
    /// perform in the generic phase model.
    pub fn phase_steps(self) -> &'static [(Phase, Phase)] {
        match self {
            ActionKind::Activate => &[
                (Phase::Inactive, Phase::Active),
                (Phase::Mitigated, Phase::Active),
            ],
            ActionKind::MishapStep => &[(Phase::Active, Phase::Mishap)],
            ActionKind::StartMitigate => &[(Phase::Active, Phase::Mitigated)],
            ActionKind::EndMitigate => &[(Phase::Mitigated, Phase::Inactive)],
            ActionKind::CompleteMitigate => &[(Phase::Active, Phase::Inactive)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ActionClass {
    Endangerment(EndangermentClass),
    Mitigation(MitigationClass),
}

/// Label of a risk transition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ActionLabel {
    pub factor: FactorId,
    pub kind: ActionKind,
    pub class: ActionClass,
    pub mechanism: Option<String>,
    /// Set on end-mitigations of `offRepair` factors: the step needs the
    /// vehicle out of order and is not available at run-time.
    pub offline: bool,
}

impl ActionLabel {
    pub fn endangerment(factor: &str, kind: ActionKind, class: EndangermentClass) -> Self {
        assert!(kind.is_endangerment(), "{kind:?} is not an endangerment");
        ActionLabel {
            factor: factor.to_string(),
            kind,
            class: ActionClass::Endangerment(class),
            mechanism: None,
            offline: false,
        }
    }

    pub fn mitigation(
        factor: &str,
        kind: ActionKind,
        class: MitigationClass,
        mechanism: Option<String>,
        offline: bool,
    ) -> Self {
        assert!(kind.is_mitigation(), "{kind:?} is not a mitigation");
        ActionLabel {
            factor: factor.to_string(),
            kind,
            class: ActionClass::Mitigation(class),
            mechanism,
            offline,
        }
    }

    /// Label of `kind` for `factor` as generated by its phase model.
    pub fn for_factor(factor: &CausalFactor, kind: ActionKind) -> Self {
        if kind.is_endangerment() {
            Self::endangerment(&factor.id, kind, factor.endangerment_class)
        } else {
            Self::mitigation(
                &factor.id,
                kind,
                factor.mitigation_class,
                factor.mechanism.clone(),
                kind == ActionKind::EndMitigate && factor.off_repair,
            )
        }
    }

    pub fn is_endangerment(&self) -> bool {
        self.kind.is_endangerment()
    }

    pub fn is_mitigation(&self) -> bool {
        self.kind.is_mitigation()
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cf = &self.factor;
        match (self.kind, self.class) {
            (ActionKind::Activate, ActionClass::Endangerment(c)) => {
                write!(f, "e^{{{cf}}}_{{{}}}", c.symbol())
            }
            (ActionKind::MishapStep, _) => write!(f, "e_m^{{{cf}}}"),
            (kind, class) => {
                let sub = match kind {
                    ActionKind::StartMitigate => "s",
                    ActionKind::EndMitigate => "e",
                    _ => "c",
                };
                write!(f, "m_{sub}^{{{cf}}}")?;
                if let (Some(mech), ActionClass::Mitigation(mc)) = (&self.mechanism, class) {
                    let verb = match kind {
                        ActionKind::StartMitigate => "alv",
                        ActionKind::EndMitigate => "end",
                        _ => "cmp",
                    };
                    write!(f, " {}^{cf}_{verb}/{mech}", mc.abbrev())?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CausalFactor {
    pub id: FactorId,
    pub name: String,
    pub endangerment_class: EndangermentClass,
    pub has_mishap_phase: bool,
    pub direct: bool,
    pub off_repair: bool,
    pub re_endanger: bool,
    pub mitigation_class: MitigationClass,
    pub mechanism: Option<String>,
}

impl CausalFactor {
    /// A factor with the plain phase model: activation, start and end of
    /// mitigation, nothing else.
    pub fn new(id: &str, class: EndangermentClass) -> Self {
        CausalFactor {
            id: id.to_string(),
            name: String::new(),
            endangerment_class: class,
            has_mishap_phase: false,
            direct: false,
            off_repair: false,
            re_endanger: false,
            mitigation_class: MitigationClass::default_for(class),
            mechanism: None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_mishap(mut self) -> Self {
        self.has_mishap_phase = true;
        self
    }

    pub fn with_direct(mut self) -> Self {
        self.direct = true;
        self
    }

    pub fn with_off_repair(mut self) -> Self {
        self.off_repair = true;
        self
    }

    pub fn with_re_endanger(mut self) -> Self {
        self.re_endanger = true;
        self
    }

    pub fn with_mitigation(mut self, class: MitigationClass, mechanism: Option<&str>) -> Self {
        self.mitigation_class = class;
        self.mechanism = mechanism.map(str::to_string);
        self
    }

    /// Phases the factor can take.
    pub fn phases(&self) -> impl Iterator<Item = Phase> + '_ {
        Phase::ALL
            .into_iter()
            .filter(|p| *p != Phase::Mishap || self.has_mishap_phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConstraintKind {
    Requires,
    Causes,
    Denies,
    Excludes,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::Requires,
        ConstraintKind::Causes,
        ConstraintKind::Denies,
        ConstraintKind::Excludes,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ConstraintKind::Requires => "requires",
            ConstraintKind::Causes => "causes",
            ConstraintKind::Denies => "denies",
            ConstraintKind::Excludes => "excludes",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == s)
    }
}

/// `left <kind> right`, e.g. `nC requires O`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Constraint {
    pub left: FactorId,
    pub kind: ConstraintKind,
    pub right: FactorId,
}

impl Constraint {
    pub fn new(left: &str, kind: ConstraintKind, right: &str) -> Self {
        Constraint {
            left: left.to_string(),
            kind,
            right: right.to_string(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.kind.keyword(), self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SituationKind {
    Atomic,
    Aspect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Situation {
    pub id: SituationId,
    pub kind: SituationKind,
    pub factors: BTreeSet<FactorId>,
    pub constraints: BTreeSet<Constraint>,
}

impl Situation {
    pub fn atomic<'a>(id: &str, factors: impl IntoIterator<Item = &'a str>) -> Self {
        Situation {
            id: id.to_string(),
            kind: SituationKind::Atomic,
            factors: factors.into_iter().map(str::to_string).collect(),
            constraints: BTreeSet::new(),
        }
    }

    pub fn aspect<'a>(id: &str, factors: impl IntoIterator<Item = &'a str>) -> Self {
        Situation {
            kind: SituationKind::Aspect,
            ..Self::atomic(id, factors)
        }
    }

    pub fn is_aspect(&self) -> bool {
        self.kind == SituationKind::Aspect
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CausalFactorModel {
    /// Declaration order is kept; it orders factors inside risk states.
    pub factors: IndexMap<FactorId, CausalFactor>,
    pub situations: BTreeMap<SituationId, Situation>,
    pub processes: BTreeMap<ProcessName, ProcessExpr>,
    pub root: Option<ProcessName>,
    pub global_constraints: BTreeSet<Constraint>,
}

impl CausalFactorModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_factor(&mut self, factor: CausalFactor) -> &mut Self {
        self.factors.insert(factor.id.clone(), factor);
        self
    }

    pub fn add_situation(&mut self, situation: Situation) -> &mut Self {
        self.situations.insert(situation.id.clone(), situation);
        self
    }

    pub fn add_constraint(&mut self, constraint: Constraint) -> &mut Self {
        self.global_constraints.insert(constraint);
        self
    }

    pub fn add_process(&mut self, name: &str, expr: ProcessExpr) -> &mut Self {
        self.processes.insert(name.to_string(), expr);
        self
    }

    pub fn set_root(&mut self, name: &str) -> &mut Self {
        self.root = Some(name.to_string());
        self
    }

    pub fn situation(&self, id: &str) -> Result<&Situation> {
        self.situations
            .get(id)
            .ok_or_else(|| Error::UnknownSituation(id.to_string()))
    }

    pub fn factor(&self, id: &str) -> Result<&CausalFactor> {
        self.factors
            .get(id)
            .ok_or_else(|| Error::UnknownFactor(id.to_string()))
    }

    /// Factors in scope for `situation`: its own plus those of every aspect
    /// superimposed onto it anywhere in the process, in declaration order.
    pub fn effective_factors(&self, situation: &str) -> Result<Vec<FactorId>> {
        let ids = self.effective_factor_set(situation)?;
        Ok(self
            .factors
            .keys()
            .filter(|id| ids.contains(*id))
            .cloned()
            .collect())
    }

    fn effective_factor_set(&self, situation: &str) -> Result<BTreeSet<FactorId>> {
        let sit = self.situation(situation)?;
        let mut ids = sit.factors.clone();
        if sit.is_aspect() {
            return Ok(ids);
        }
        for aspect in self.aspects_of(situation)? {
            ids.extend(self.situation(&aspect)?.factors.iter().cloned());
        }
        Ok(ids)
    }

    /// Aspects composed in parallel with an atomic situation.
    pub fn aspects_of(&self, situation: &str) -> Result<BTreeSet<SituationId>> {
        if self.root.is_none() {
            return Ok(BTreeSet::new());
        }
        let contexts = process::aspect_contexts(self)?;
        Ok(contexts.get(situation).cloned().unwrap_or_default())
    }

    /// Global constraints, the situation's own, and those of its aspects,
    /// restricted to the situation's effective factors.
    pub fn effective_constraints(&self, situation: &str) -> Result<BTreeSet<Constraint>> {
        let sit = self.situation(situation)?;
        let scope = self.effective_factor_set(situation)?;
        let mut all: BTreeSet<Constraint> = self.global_constraints.clone();
        all.extend(sit.constraints.iter().cloned());
        if !sit.is_aspect() {
            for aspect in self.aspects_of(situation)? {
                all.extend(self.situation(&aspect)?.constraints.iter().cloned());
            }
        }
        Ok(all
            .into_iter()
            .filter(|c| scope.contains(&c.left) && scope.contains(&c.right))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Location {
    Model,
    Factor(FactorId),
    Situation(SituationId),
    Constraint {
        constraint: Constraint,
        scope: Option<SituationId>,
    },
    Process(ProcessName),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => write!(f, "model"),
            Location::Factor(id) => write!(f, "factor {id}"),
            Location::Situation(id) => write!(f, "situation {id}"),
            Location::Constraint {
                constraint,
                scope: None,
            } => write!(f, "constraint {constraint}"),
            Location::Constraint {
                constraint,
                scope: Some(s),
            } => write!(f, "constraint in {s} {constraint}"),
            Location::Process(name) => write!(f, "process {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

impl Diagnostic {
    fn error(location: Location, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            location,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

/// Checks every well-formedness rule of a model. An empty result means the
/// model is valid.
pub fn validate(model: &CausalFactorModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (key, factor) in &model.factors {
        let loc = || Location::Factor(key.clone());
        if factor.id.is_empty() {
            out.push(Diagnostic::error(loc(), "factor id is empty"));
        } else if *key != factor.id {
            out.push(Diagnostic::error(
                loc(),
                format!("factor registered as '{key}' carries id '{}'", factor.id),
            ));
        }
        if factor.direct && factor.off_repair {
            out.push(Diagnostic::error(
                loc(),
                format!("factor '{key}' cannot be both direct and offRepair"),
            ));
        }
    }

    let mut scoped: Vec<(Option<&SituationId>, &Constraint)> =
        model.global_constraints.iter().map(|c| (None, c)).collect();

    for (key, sit) in &model.situations {
        if *key != sit.id {
            out.push(Diagnostic::error(
                Location::Situation(key.clone()),
                format!("situation registered as '{key}' carries id '{}'", sit.id),
            ));
        }
        for f in &sit.factors {
            if !model.factors.contains_key(f) {
                out.push(Diagnostic::error(
                    Location::Situation(key.clone()),
                    format!("situation '{key}' lists undeclared factor '{f}'"),
                ));
            }
        }
        scoped.extend(sit.constraints.iter().map(|c| (Some(key), c)));
    }

    // Process checks come first: constraint scoping depends on aspect
    // superimposition, which is only meaningful for a well-formed process.
    let process_diags = process::validate_processes(model);
    let process_ok = process_diags.is_empty();
    out.extend(process_diags);

    for (scope, c) in &scoped {
        let loc = || Location::Constraint {
            constraint: (*c).clone(),
            scope: scope.cloned(),
        };
        if c.left == c.right {
            out.push(Diagnostic::error(
                loc(),
                format!("constraint relates '{}' to itself", c.left),
            ));
        }
        let mut undeclared = false;
        for f in [&c.left, &c.right] {
            if !model.factors.contains_key(f) {
                undeclared = true;
                out.push(Diagnostic::error(
                    loc(),
                    format!("constraint references undeclared factor '{f}'"),
                ));
            }
        }
        if undeclared || !process_ok {
            continue;
        }
        if let Some(sit_id) = scope {
            if !model.situations.contains_key(*sit_id) {
                out.push(Diagnostic::error(
                    loc(),
                    format!("constraint scoped to undeclared situation '{sit_id}'"),
                ));
                continue;
            }
            match constraint_scope_factors(model, sit_id) {
                Ok(allowed) => {
                    for f in [&c.left, &c.right] {
                        if !allowed.contains(f) {
                            out.push(Diagnostic::error(
                                loc(),
                                format!("factor '{f}' is not in scope of situation '{sit_id}'"),
                            ));
                        }
                    }
                }
                Err(e) => out.push(Diagnostic::error(loc(), e.to_string())),
            }
        }
    }

    out.extend(conflicts(model));
    out.sort();
    out.dedup();
    out
}

/// Factors a constraint declared in `situation` may mention: the effective
/// factors of the situation, and for an aspect additionally everything in
/// scope of the situations it is superimposed onto.
fn constraint_scope_factors(model: &CausalFactorModel, situation: &str) -> Result<BTreeSet<FactorId>> {
    let sit = model.situation(situation)?;
    let mut allowed: BTreeSet<FactorId> = model.effective_factors(situation)?.into_iter().collect();
    if sit.is_aspect() && model.root.is_some() {
        for (atom, aspects) in process::aspect_contexts(model)? {
            if aspects.contains(situation) {
                allowed.extend(model.effective_factors(&atom)?);
            }
        }
    }
    Ok(allowed)
}

/// Pairs carrying `causes` together with `denies` or `excludes` within one
/// constraint scope (the globals alone, or globals plus one situation).
fn conflicts(model: &CausalFactorModel) -> Vec<Diagnostic> {
    let mut scopes: Vec<(Option<&SituationId>, BTreeSet<&Constraint>)> =
        vec![(None, model.global_constraints.iter().collect())];
    for (id, sit) in &model.situations {
        let mut set: BTreeSet<&Constraint> = model.global_constraints.iter().collect();
        set.extend(sit.constraints.iter());
        scopes.push((Some(id), set));
    }

    let mut reported: BTreeSet<(FactorId, FactorId, ConstraintKind)> = BTreeSet::new();
    let mut out = Vec::new();
    for (scope, set) in scopes {
        for c in set.iter().filter(|c| c.kind == ConstraintKind::Causes) {
            for other in [ConstraintKind::Denies, ConstraintKind::Excludes] {
                let clash = Constraint::new(&c.left, other, &c.right);
                if !set.contains(&clash) {
                    continue;
                }
                if !reported.insert((c.left.clone(), c.right.clone(), other)) {
                    continue;
                }
                let in_globals = model.global_constraints.contains(&clash)
                    && model.global_constraints.contains(*c);
                out.push(Diagnostic::error(
                    Location::Constraint {
                        constraint: clash.clone(),
                        scope: if in_globals { None } else { scope.cloned() },
                    },
                    format!(
                        "conflicting constraints on pair ({}, {}): causes and {}",
                        c.left,
                        c.right,
                        other.keyword()
                    ),
                ));
            }
        }
    }
    out
}
