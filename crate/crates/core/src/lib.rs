//! Trajectory optimization with relevant-constraint-sensitivity (RCS)
//! regularization.
//!
//! Plans open-loop trajectories that minimize a nominal cost plus a penalty
//! on how strongly near-active constraints react to parameter errors, and
//! evaluates the resulting plans by Monte Carlo simulation.

// `!(a > b)` is used on purpose so that NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod integrate;
pub mod ocp;
pub mod relevance;
pub mod scenarios;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
pub use evaluation::{
    collision_probability, rcs_profile, sensitivity_check, simulate_open_loop, tradeoff_sweep, wilson_interval,
    CollisionEstimate, McConfig, RcsProfile, SensitivityCheck, TradeoffReport,
};
pub use integrate::ControlSignal;
pub use ocp::{check_feasibility, evaluate_constraints, evaluate_cost, FeasibilityReport, OcpProblem, Trajectory};
pub use relevance::{rcs_matrix, rcs_running_cost, relevance, RcsWeights, RelevanceKind, RelevanceSpec};
pub use sensitivity::{
    constraint_sensitivity, first_order_predict, jacobians, propagate_augmented, JacobianPair, JacobianScheme,
};
pub use solver::{
    solve, solve_desensitized, transcribe, CostMode, NlpSolution, ObjectiveBreakdown, TranscriptionOptions,
};
