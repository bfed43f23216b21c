//! Monte Carlo evaluation of open-loop plans and alpha trade-off sweeps.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{propagate_states, ControlSignal};
use crate::ocp::{trapezoid, OcpProblem, Trajectory};
use crate::relevance::{rcs_matrix, RelevanceSpec};
use crate::scenarios::{closed_form_sg_2d, refine_grid, Scenario, ScenarioConfig};
use crate::sensitivity::{
    constraint_sensitivity, finite_difference_sensitivities, propagate_augmented, JacobianScheme,
    PropagationOptions,
};
use crate::solver::{solve_desensitized, TranscriptionOptions};

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
/// RK4 steps per fine-grid interval; with the default refinement of 4 a
/// solver interval gets 12 steps.
const SUBSTEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub num_samples: usize,
    /// Standard deviation of each parameter perturbation (not the variance).
    pub perturbation_std: f64,
    pub rng_seed: u64,
    /// A sample collides when any constraint exceeds this value.
    pub violation_tolerance: f64,
    /// Fine-grid intervals per solver interval.
    pub refinement: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            perturbation_std: 0.1_f64.sqrt(),
            rng_seed: 0,
            violation_tolerance: 0.0,
            refinement: 4,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if !(self.perturbation_std >= 0.0 && self.perturbation_std.is_finite()) {
            return Err(Error::Config(format!(
                "perturbation_std must be finite and >= 0, got {}",
                self.perturbation_std
            )));
        }
        if self.refinement < 4 {
            return Err(Error::Config("refinement must be at least 4".into()));
        }
        if !self.violation_tolerance.is_finite() {
            return Err(Error::Config("violation_tolerance must be finite".into()));
        }
        Ok(())
    }
}

/// Result of re-integrating a plan with one parameter value.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    /// Fine-grid trajectory; truncated at the last finite state on divergence.
    pub trajectory: Option<Trajectory>,
    pub collided: bool,
    pub max_violation: f64,
    pub diverged: bool,
}

/// Runs `control` open loop on the true dynamics with parameter `param`,
/// checking the path constraints at every point of `grid`.
pub fn simulate_on_grid(
    problem: &OcpProblem,
    control: &ControlSignal,
    param: &[f64],
    grid: &[f64],
    violation_tolerance: f64,
) -> Result<SimulationOutcome> {
    let states = match propagate_states(problem, param, control, grid, SUBSTEPS) {
        Ok(s) => s,
        Err(Error::Divergence { .. }) => {
            return Ok(SimulationOutcome {
                trajectory: None,
                collided: true,
                max_violation: f64::INFINITY,
                diverged: true,
            })
        }
        Err(e) => return Err(e),
    };
    let mut g = vec![0.0; problem.constraint_dim()];
    let mut worst = f64::NEG_INFINITY;
    for (x, &t) in states.iter().zip(grid) {
        problem.constraints_into(x, param, t, &mut g);
        for v in &g {
            worst = worst.max(if v.is_nan() { f64::INFINITY } else { *v });
        }
    }
    let controls = grid
        .iter()
        .map(|&t| {
            let mut u = control.eval(t);
            problem.clamp_control(&mut u);
            u
        })
        .collect();
    Ok(SimulationOutcome {
        trajectory: Some(Trajectory::new(grid.to_vec(), states, controls)?),
        collided: worst > violation_tolerance,
        max_violation: worst,
        diverged: false,
    })
}

/// [`simulate_on_grid`] on the plan's node grid refined `mc.refinement`
/// times, using the plan's controls.
pub fn simulate_open_loop(
    problem: &OcpProblem,
    plan: &Trajectory,
    param: &[f64],
    mc: &McConfig,
) -> Result<SimulationOutcome> {
    mc.validate()?;
    plan.check_dims(problem)?;
    let grid = refine_grid(&plan.times, mc.refinement);
    simulate_on_grid(
        problem,
        &ControlSignal::from_trajectory(plan),
        param,
        &grid,
        mc.violation_tolerance,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEstimate {
    pub p_c: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub collisions: usize,
    pub diverged: usize,
    pub n_samples: usize,
}

/// Wilson score interval for `successes` out of `n` at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Parameter perturbation of sample `index`. Each sample owns the ChaCha
/// stream `index` under key `seed`, so draws do not depend on scheduling.
pub fn sample_perturbation(seed: u64, index: u64, dim: usize, std: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            std * z
        })
        .collect()
}

/// Fraction of perturbed open-loop executions of `plan` that violate a path
/// constraint. Divergent runs count as collisions.
pub fn collision_probability(problem: &OcpProblem, plan: &Trajectory, mc: &McConfig) -> Result<CollisionEstimate> {
    mc.validate()?;
    plan.check_dims(problem)?;
    let grid = refine_grid(&plan.times, mc.refinement);
    let control = ControlSignal::from_trajectory(plan);
    let p0 = problem.nominal_param();
    let outcomes: Vec<Result<SimulationOutcome>> = (0..mc.num_samples as u64)
        .into_par_iter()
        .map(|j| {
            let dp = sample_perturbation(mc.rng_seed, j, p0.len(), mc.perturbation_std);
            let p: Vec<f64> = p0.iter().zip(&dp).map(|(a, b)| a + b).collect();
            simulate_on_grid(problem, &control, &p, &grid, mc.violation_tolerance)
        })
        .collect();
    let (mut collisions, mut diverged) = (0, 0);
    for o in outcomes {
        let o = o?;
        collisions += o.collided as usize;
        diverged += o.diverged as usize;
    }
    let (ci_low, ci_high) = wilson_interval(collisions, mc.num_samples);
    Ok(CollisionEstimate {
        p_c: collisions as f64 / mc.num_samples as f64,
        ci_low,
        ci_high,
        collisions,
        diverged,
        n_samples: mc.num_samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub alpha: f64,
    pub t_f: Option<f64>,
    pub p_c: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub converged: bool,
    pub objective: Option<f64>,
    pub sensitivity_cost: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffReport {
    pub scenario: String,
    pub perturbation_std: f64,
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffReport {
    pub const CSV_HEADER: [&'static str; 7] = ["alpha", "t_f", "p_c", "ci_low", "ci_high", "n_samples", "seed"];

    /// CSV with one row per alpha; failed solves leave the numeric cells empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).expect("write to memory");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.alpha.to_string(),
                cell(r.t_f),
                cell(r.p_c),
                cell(r.ci_low),
                cell(r.ci_high),
                r.n_samples.to_string(),
                r.seed.to_string(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Solves the scenario at each `alpha` (best of the scenario's seeds) and
/// estimates each plan's collision probability with the same random draws.
/// A failed solve is recorded in its row and the sweep continues.
pub fn tradeoff_sweep(
    config: &ScenarioConfig,
    alphas: &[f64],
    mc: &McConfig,
    options: &TranscriptionOptions,
) -> Result<TradeoffReport> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha list is empty".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {a}")));
    }
    mc.validate()?;
    let scenario = config.build()?;
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for alpha in sorted {
        let opts = options.clone().with_alpha(alpha)?;
        let mut row = TradeoffRow {
            alpha,
            t_f: None,
            p_c: None,
            ci_low: None,
            ci_high: None,
            n_samples: mc.num_samples,
            seed: mc.rng_seed,
            converged: false,
            objective: None,
            sensitivity_cost: None,
            error: None,
            trajectory: None,
        };
        match solve_desensitized(&scenario.problem, &opts, &scenario.seeds) {
            Ok(sol) => {
                let est = collision_probability(&scenario.problem, &sol.trajectory, mc)?;
                row.t_f = Some(sol.trajectory.final_time);
                row.p_c = Some(est.p_c);
                row.ci_low = Some(est.ci_low);
                row.ci_high = Some(est.ci_high);
                row.converged = sol.converged;
                row.objective = Some(sol.objective);
                row.sensitivity_cost = Some(sol.objective_breakdown.sensitivity);
                row.trajectory = Some(sol.trajectory);
            }
            Err(e) => {
                log::warn!("alpha {alpha}: {e}");
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    Ok(TradeoffReport {
        scenario: scenario.kind.to_string(),
        perturbation_std: mc.perturbation_std,
        rows,
    })
}

/// Relevance-weighted constraint sensitivities at the nodes of a trajectory.
#[derive(Debug, Clone)]
pub struct RcsProfile {
    pub s_r: Vec<DMatrix<f64>>,
    /// `||vec S_r||^2` per node (unit weights).
    pub integrand: Vec<f64>,
    /// Trapezoid integral of `integrand` over the nodes.
    pub integral: f64,
}

/// Uses the trajectory's own sensitivities when present, otherwise
/// propagates them along its controls.
pub fn rcs_profile(problem: &OcpProblem, traj: &Trajectory, spec: &RelevanceSpec) -> Result<RcsProfile> {
    traj.check_dims(problem)?;
    let propagated;
    let sens = match &traj.sensitivities {
        Some(s) => s,
        None => {
            propagated = propagate_augmented(problem, &ControlSignal::from_trajectory(traj), &traj.times)?;
            propagated.sensitivities.as_ref().expect("propagation records sensitivities")
        }
    };
    let scheme = JacobianScheme::preferred(problem);
    let mut g = vec![0.0; problem.constraint_dim()];
    let mut s_r = Vec::with_capacity(traj.len());
    let mut integrand = Vec::with_capacity(traj.len());
    for ((x, &t), s) in traj.states.iter().zip(&traj.times).zip(sens) {
        problem.constraints_into(x, problem.nominal_param(), t, &mut g);
        let sg = constraint_sensitivity(problem, x, s, t, scheme)?;
        let sr = rcs_matrix(&g, &sg, spec)?;
        integrand.push(sr.norm_squared());
        s_r.push(sr);
    }
    let integral = trapezoid(&traj.times, &integrand);
    Ok(RcsProfile { s_r, integrand, integral })
}

/// Comparison of propagated sensitivities against independent oracles.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCheck {
    pub nodes: usize,
    pub fd_step: f64,
    /// Largest `||S - S_fd||_F / ||S_fd||_F` over the nodes.
    pub max_rel_error_s: f64,
    /// `closed-form` (absolute error) or `finite-difference` (relative).
    pub sg_oracle: &'static str,
    pub max_error_sg: f64,
    pub tolerance_s: f64,
    pub tolerance_sg: f64,
    pub passed: bool,
}

pub const SENSITIVITY_TOLERANCE: f64 = 1e-3;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;

/// Checks `S` against central differences of re-integrated states and
/// `S_g` against the closed form (planar family, single parameter) or
/// against central differences of the constraints along the perturbed
/// trajectories.
pub fn sensitivity_check(scenario: &Scenario, traj: &Trajectory, fd_step: f64) -> Result<SensitivityCheck> {
    let problem = &scenario.problem;
    let control = ControlSignal::from_trajectory(traj);
    let grid = &traj.times;
    let nominal = propagate_augmented(problem, &control, grid)?;
    let sens = nominal.sensitivities.as_ref().expect("propagation records sensitivities");
    let fd = finite_difference_sensitivities(problem, &control, grid, fd_step, PropagationOptions::for_problem(problem).substeps.max(10))?;
    let mut max_rel_s: f64 = 0.0;
    for (s, f) in sens.iter().zip(&fd) {
        let err = (s - f).norm();
        let scale = f.norm();
        let rel = if err == 0.0 { 0.0 } else if scale > 0.0 { err / scale } else { f64::INFINITY };
        max_rel_s = max_rel_s.max(rel);
    }
    let scheme = JacobianScheme::preferred(problem);
    let p0 = problem.nominal_param().to_vec();
    let closed_form = scenario.constraint_exponent.filter(|_| p0.len() == 1);
    let mut max_sg: f64 = 0.0;
    let k = problem.constraint_dim();
    if let Some(lambda) = closed_form {
        for ((x, &t), s) in nominal.states.iter().zip(grid).zip(sens) {
            let sg = constraint_sensitivity(problem, x, s, t, scheme)?;
            let agent = scenario.agent_position(x);
            let obstacle = scenario.obstacle_positions(x)[0];
            let oracle = closed_form_sg_2d(agent, obstacle, t - problem.initial_time(), lambda)?;
            max_sg = max_sg.max((sg[(0, 0)] - oracle).abs());
        }
    } else {
        let mut gp = vec![0.0; k];
        let mut gm = vec![0.0; k];
        for j in 0..p0.len() {
            let mut p = p0.clone();
            p[j] += fd_step;
            let plus = propagate_states(problem, &p, &control, grid, 10)?;
            let pp = p.clone();
            p[j] -= 2.0 * fd_step;
            let minus = propagate_states(problem, &p, &control, grid, 10)?;
            for (node, (&t, s)) in grid.iter().zip(sens).enumerate() {
                let sg = constraint_sensitivity(problem, &nominal.states[node], s, t, scheme)?;
                problem.constraints_into(&plus[node], &pp, t, &mut gp);
                problem.constraints_into(&minus[node], &p, t, &mut gm);
                for i in 0..k {
                    let oracle = (gp[i] - gm[i]) / (2.0 * fd_step);
                    let err = (sg[(i, j)] - oracle).abs();
                    let rel = if err == 0.0 { 0.0 } else { err / oracle.abs().max(1e-8) };
                    max_sg = max_sg.max(rel);
                }
            }
        }
    }
    let (sg_oracle, tolerance_sg) = if closed_form.is_some() {
        ("closed-form", CLOSED_FORM_TOLERANCE)
    } else {
        ("finite-difference", SENSITIVITY_TOLERANCE)
    };
    Ok(SensitivityCheck {
        nodes: grid.len(),
        fd_step,
        max_rel_error_s: max_rel_s,
        sg_oracle,
        max_error_sg: max_sg,
        tolerance_s: SENSITIVITY_TOLERANCE,
        tolerance_sg,
        passed: max_rel_s < SENSITIVITY_TOLERANCE && max_sg < tolerance_sg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_known_values() {
        // 0 of 10: upper bound z^2 / (n + z^2)
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, Z95 * Z95 / (10.0 + Z95 * Z95), max_relative = 1e-12);
        let (lo, hi) = wilson_interval(50, 100);
        assert_relative_eq!(lo + hi, 1.0, epsilon = 1e-12);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a = sample_perturbation(7, 3, 2, 1.0);
        let _ = sample_perturbation(7, 2, 2, 1.0);
        assert_eq!(a, sample_perturbation(7, 3, 2, 1.0));
        assert_ne!(a, sample_perturbation(7, 4, 2, 1.0));
        assert_ne!(a, sample_perturbation(8, 3, 2, 1.0));
        assert_eq!(sample_perturbation(7, 3, 2, 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(McConfig { num_samples: 0, ..Default::default() }.validate().is_err());
        assert!(McConfig { perturbation_std: -1.0, ..Default::default() }.validate().is_err());
        assert!(McConfig { refinement: 2, ..Default::default() }.validate().is_err());
    }
}
