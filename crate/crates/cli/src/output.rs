//! Plot-ready CSV and JSON artifacts.

use std::f64::consts::TAU;
use std::path::Path;

use rcsplan::evaluation::rcs_profile;
use rcsplan::scenarios::Scenario;
use rcsplan::solver::{NlpSolution, TranscriptionOptions};
use rcsplan::Trajectory;

use crate::Failure;

/// One row per node: `t, x.., u.., g.., S_r entries, rcs_integrand`.
/// `S_r` columns are named `S_r_<constraint>_<param>` (1-based) and the
/// integrand is `||vec S_r||^2` with unit weights. Heading controls are
/// reported in `[0, 2 pi)`.
pub fn write_trajectory(
    path: &Path,
    scenario: &Scenario,
    traj: &Trajectory,
    options: &TranscriptionOptions,
) -> Result<(), Failure> {
    let problem = &scenario.problem;
    let profile = rcs_profile(problem, traj, &options.relevance)?;
    let (k, l) = (problem.constraint_dim(), problem.param_dim());
    let mut header = vec!["t".to_string()];
    header.extend(problem.state_names().iter().cloned());
    header.extend(problem.control_names().iter().cloned());
    header.extend((1..=k).map(|i| format!("g_{i}")));
    for i in 1..=k {
        for j in 1..=l {
            header.push(format!("S_r_{i}_{j}"));
        }
    }
    header.push("rcs_integrand".into());

    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Failure::Runtime(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(io)?;
    let angles = problem.angle_controls();
    let mut g = vec![0.0; k];
    for node in 0..traj.len() {
        let (t, x) = (traj.times[node], &traj.states[node]);
        problem.constraints_into(x, problem.nominal_param(), t, &mut g);
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.extend(traj.controls[node].iter().zip(angles).map(|(&u, &angle)| {
            if angle { u.rem_euclid(TAU).to_string() } else { u.to_string() }
        }));
        row.extend(g.iter().map(f64::to_string));
        let sr = &profile.s_r[node];
        for i in 0..k {
            for j in 0..l {
                row.push(sr[(i, j)].to_string());
            }
        }
        row.push(profile.integrand[node].to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn solution_summary(
    scenario: &Scenario,
    sol: &NlpSolution,
    alpha: f64,
    options: &TranscriptionOptions,
) -> Result<String, Failure> {
    let profile = rcs_profile(&scenario.problem, &sol.trajectory, &options.relevance)?;
    let doc = serde_json::json!({
        "scenario": scenario.kind.to_string(),
        "alpha": alpha,
        "cost_mode": options.cost_mode.to_string(),
        "relevance": { "kind": options.relevance.kind.to_string(), "scale": options.relevance.scale },
        "nodes": options.num_nodes,
        "converged": sol.converged,
        "message": sol.message,
        "objective": sol.objective,
        "objective_breakdown": sol.objective_breakdown,
        "final_time": sol.trajectory.final_time,
        "kkt_residual": sol.kkt_residual,
        "max_constraint_violation": sol.max_constraint_violation,
        "outer_iterations": sol.outer_iterations,
        "inner_iterations": sol.inner_iterations,
        "min_clearance": scenario.min_clearance(&sol.trajectory),
        "crossing_separation": scenario.crossing_separation(&sol.trajectory, 8),
        "rcs_integral": profile.integral,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("json value serializes"))
}
