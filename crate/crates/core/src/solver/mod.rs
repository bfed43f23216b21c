//! Direct-collocation solver for the nominal and sensitivity-penalized
//! problems.

mod augmented_lagrangian;
mod sparse;
mod transcription;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sparse::SparseRows;
pub use transcription::{CollocationNlp, Derivatives, Evaluation};

use crate::error::{Error, Result};
use crate::ocp::{OcpProblem, Trajectory};
use crate::relevance::{RcsWeights, RelevanceSpec};
use crate::sensitivity::JacobianScheme;

/// Which sensitivity penalty is added to the nominal cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// No sensitivity states, no penalty.
    Nominal,
    /// `int ||vec S||_Q^2 dt` (state dispersion).
    Doc,
    /// `int ||vec S_g||_Q^2 dt` (raw constraint sensitivity).
    Naive,
    /// `int ||vec S_r||_Q^2 dt` (relevance-weighted constraint sensitivity).
    #[default]
    Rcs,
}

impl CostMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::Nominal => "nominal",
            CostMode::Doc => "doc",
            CostMode::Naive => "naive",
            CostMode::Rcs => "rcs",
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [CostMode::Nominal, CostMode::Doc, CostMode::Naive, CostMode::Rcs]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown cost mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DefectScheme {
    #[default]
    Trapezoidal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptionOptions {
    pub num_nodes: usize,
    pub defect_scheme: DefectScheme,
    pub cost_mode: CostMode,
    pub weights: RcsWeights,
    pub relevance: RelevanceSpec,
    pub path_constraint_tolerance: f64,
    pub kkt_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    /// `None` picks analytic Jacobians when the problem supplies them.
    pub jacobian_scheme: Option<JacobianScheme>,
    pub verbosity: u8,
}

pub const MIN_NODES: usize = 10;

impl Default for TranscriptionOptions {
    fn default() -> Self {
        Self {
            num_nodes: 50,
            defect_scheme: DefectScheme::Trapezoidal,
            cost_mode: CostMode::Rcs,
            weights: RcsWeights::Scalar(0.0),
            relevance: RelevanceSpec::default(),
            path_constraint_tolerance: 1e-6,
            kkt_tolerance: 1e-6,
            max_outer_iterations: 40,
            max_inner_iterations: 300,
            jacobian_scheme: None,
            verbosity: 0,
        }
    }
}

impl TranscriptionOptions {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "num_nodes = {} is below the minimum of {MIN_NODES}",
                self.num_nodes
            )));
        }
        if !(self.path_constraint_tolerance > 0.0) || !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::InvalidArgument("iteration limits must be positive".into()));
        }
        self.relevance.validate()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.weights = RcsWeights::scalar(alpha)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    /// `phi + int L dt`
    pub nominal: f64,
    /// Weighted sensitivity penalty.
    pub sensitivity: f64,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.nominal + self.sensitivity
    }
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub trajectory: Trajectory,
    pub converged: bool,
    pub kkt_residual: f64,
    pub max_constraint_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub objective_breakdown: ObjectiveBreakdown,
    pub message: String,
    /// Final decision vector.
    pub decision: Vec<f64>,
}

/// Transcribes the problem into a collocation NLP.
pub fn transcribe(problem: &OcpProblem, options: &TranscriptionOptions) -> Result<CollocationNlp> {
    CollocationNlp::new(problem, options)
}

/// Solves the NLP from `initial_guess` (resampled onto the node grid).
pub fn solve(nlp: &CollocationNlp, initial_guess: &Trajectory) -> Result<NlpSolution> {
    let w0 = nlp.pack(initial_guess)?;
    solve_from(nlp, w0)
}

/// Solves from a raw decision vector.
pub fn solve_from(nlp: &CollocationNlp, w0: Vec<f64>) -> Result<NlpSolution> {
    let outcome = augmented_lagrangian::solve(nlp, w0)?;
    let eval = nlp.evaluate(&outcome.w)?;
    let mut trajectory = nlp.unpack(&outcome.w)?;
    trajectory.nominal_cost = eval.nominal;
    trajectory.rcs_cost = eval.sensitivity;
    let breakdown = ObjectiveBreakdown {
        nominal: eval.nominal,
        sensitivity: eval.sensitivity,
    };
    Ok(NlpSolution {
        trajectory,
        converged: outcome.converged,
        kkt_residual: outcome.kkt_residual,
        max_constraint_violation: outcome.max_violation,
        outer_iterations: outcome.outer_iterations,
        inner_iterations: outcome.inner_iterations,
        objective: breakdown.total(),
        objective_breakdown: breakdown,
        message: outcome.message,
        decision: outcome.w,
    })
}

/// Solves from every seed and keeps the best converged solution: lowest
/// objective, then lowest constraint violation, then earliest seed.
pub fn solve_desensitized(
    problem: &OcpProblem,
    options: &TranscriptionOptions,
    seeds: &[Trajectory],
) -> Result<NlpSolution> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let nlp = transcribe(problem, options)?;
    let results: Vec<Result<NlpSolution>> = seeds.par_iter().map(|s| solve(&nlp, s)).collect();
    pick_best(results)
}

pub(crate) fn pick_best(results: Vec<Result<NlpSolution>>) -> Result<NlpSolution> {
    let attempts = results.len();
    let mut reasons = Vec::new();
    let mut best: Option<(usize, NlpSolution)> = None;
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(sol) if sol.converged => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => compare(&sol, b) == Ordering::Less,
                };
                if better {
                    best = Some((idx, sol));
                }
            }
            Ok(sol) => reasons.push(format!(
                "seed {idx}: not converged ({}; kkt {:.2e}, violation {:.2e})",
                sol.message, sol.kkt_residual, sol.max_constraint_violation
            )),
            Err(e) => reasons.push(format!("seed {idx}: {e}")),
        }
    }
    best.map(|(_, s)| s)
        .ok_or(Error::AllSeedsFailed { attempts, reasons })
}

fn compare(a: &NlpSolution, b: &NlpSolution) -> Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then(a.max_constraint_violation.total_cmp(&b.max_constraint_violation))
}
