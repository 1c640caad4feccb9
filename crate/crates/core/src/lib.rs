//! Run-time risk analysis for automated vehicles.
//!
//! Causal factors move through a small phase model (inactive, active,
//! mitigated, mishap). The phase models of all factors relevant in a driving
//! situation are composed under constraints into a risk structure, which can
//! be searched for mitigation plans, checked against temporal formulas and
//! rendered. Driving processes relate situations and drive scenario
//! sampling.

pub mod cli;
pub mod dsl;
pub mod error;
pub mod export;
pub mod model;
pub mod planner;
pub mod process;
pub mod risk;
pub mod trace;

pub use error::{Error, Result};
pub use model::{
    validate, ActionKind, ActionLabel, CausalFactor, CausalFactorModel, Constraint, ConstraintKind,
    EndangermentClass, MitigationClass, Phase, Situation,
};
pub use process::ProcessExpr;
pub use risk::{RiskState, RiskStructure, Scope};
