//! Forward parameter sensitivities along a nominal trajectory.
//!
//! `S(t) = dx/dp` evaluated at the nominal parameter satisfies the linear
//! sensitivity equation `S' = A(t) S + B(t)`, `S(t0) = 0`, where `A = df/dx`
//! and `B = df/dp`. The constraint sensitivity is `S_g = (dg/dx) S + dg/dp`.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::integrate::{integrate_on_grid, propagate_states, ControlSignal};
use crate::ocp::{OcpProblem, Trajectory};

/// Relative central-difference step used throughout the crate.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

pub(crate) fn fd_step(value: f64) -> f64 {
    FD_RELATIVE_STEP * value.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianScheme {
    FiniteDifference,
    UserSupplied,
}

impl JacobianScheme {
    /// User-supplied when the problem provides both analytic Jacobians,
    /// finite differences otherwise.
    pub fn preferred(problem: &OcpProblem) -> Self {
        let dynamics = problem.dynamics_jacobian_fn().is_some();
        let constraints = problem.constraint_dim() == 0 || problem.constraint_jacobian_fn().is_some();
        if dynamics && constraints {
            JacobianScheme::UserSupplied
        } else {
            JacobianScheme::FiniteDifference
        }
    }
}

/// `A = df/dx` (`n x n`) and `B = df/dp` (`n x l`).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Sensitivity matrix at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityState {
    pub s: DMatrix<f64>,
    pub time: f64,
}

impl SensitivityState {
    pub fn initial(problem: &OcpProblem) -> Self {
        Self {
            s: DMatrix::zeros(problem.state_dim(), problem.param_dim()),
            time: problem.initial_time(),
        }
    }
}

/// `(df/dx, df/dp)` at `(state, nominal_param, control, time)`.
pub fn jacobians(
    problem: &OcpProblem,
    state: &[f64],
    control: &[f64],
    time: f64,
    scheme: JacobianScheme,
) -> Result<JacobianPair> {
    jacobians_at(problem, state, problem.nominal_param(), control, time, scheme)
}

pub(crate) fn jacobians_at(
    problem: &OcpProblem,
    state: &[f64],
    param: &[f64],
    control: &[f64],
    time: f64,
    scheme: JacobianScheme,
) -> Result<JacobianPair> {
    let (n, l) = (problem.state_dim(), problem.param_dim());
    check_len("state", n, state.len())?;
    check_len("control", problem.control_dim(), control.len())?;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, l);
    match scheme {
        JacobianScheme::UserSupplied => {
            let jac = problem.dynamics_jacobian_fn().ok_or_else(|| {
                Error::Precondition("problem has no analytic dynamics Jacobian".into())
            })?;
            jac(state, param, control, time, &mut a, &mut b);
        }
        JacobianScheme::FiniteDifference => {
            let f = |x: &[f64], p: &[f64], out: &mut [f64]| problem.dynamics(x, p, control, time, out);
            central_difference(state, param, n, f, &mut a, &mut b);
        }
    }
    check_finite("dynamics Jacobian A", a.as_slice())?;
    check_finite("dynamics Jacobian B", b.as_slice())?;
    Ok(JacobianPair { a, b })
}

/// `(dg/dx, dg/dp)` at `(state, param, time)`.
pub fn constraint_partials(
    problem: &OcpProblem,
    state: &[f64],
    param: &[f64],
    time: f64,
    scheme: JacobianScheme,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, l, k) = (problem.state_dim(), problem.param_dim(), problem.constraint_dim());
    check_len("state", n, state.len())?;
    check_len("param", l, param.len())?;
    let mut gx = DMatrix::zeros(k, n);
    let mut gp = DMatrix::zeros(k, l);
    if k == 0 {
        return Ok((gx, gp));
    }
    match scheme {
        JacobianScheme::UserSupplied => {
            let jac = problem.constraint_jacobian_fn().ok_or_else(|| {
                Error::Precondition("problem has no analytic constraint Jacobian".into())
            })?;
            jac(state, param, time, &mut gx, &mut gp);
        }
        JacobianScheme::FiniteDifference => {
            let g = |x: &[f64], p: &[f64], out: &mut [f64]| problem.constraints_into(x, p, time, out);
            central_difference(state, param, k, g, &mut gx, &mut gp);
        }
    }
    check_finite("constraint Jacobian dg/dx", gx.as_slice())?;
    check_finite("constraint Jacobian dg/dp", gp.as_slice())?;
    Ok((gx, gp))
}

fn central_difference<F>(
    x: &[f64],
    p: &[f64],
    rows: usize,
    f: F,
    jx: &mut DMatrix<f64>,
    jp: &mut DMatrix<f64>,
) where
    F: Fn(&[f64], &[f64], &mut [f64]),
{
    let mut xp = x.to_vec();
    let mut pp = p.to_vec();
    let mut plus = vec![0.0; rows];
    let mut minus = vec![0.0; rows];
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        f(&xp, p, &mut plus);
        xp[j] = x[j] - h;
        f(&xp, p, &mut minus);
        xp[j] = x[j];
        for i in 0..rows {
            jx[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    for j in 0..p.len() {
        let h = fd_step(p[j]);
        pp[j] = p[j] + h;
        f(x, &pp, &mut plus);
        pp[j] = p[j] - h;
        f(x, &pp, &mut minus);
        pp[j] = p[j];
        for i in 0..rows {
            jp[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// `S_g = (dg/dx) S + dg/dp` at the nominal parameter.
pub fn constraint_sensitivity(
    problem: &OcpProblem,
    state: &[f64],
    s: &DMatrix<f64>,
    time: f64,
    scheme: JacobianScheme,
) -> Result<DMatrix<f64>> {
    if s.nrows() != problem.state_dim() || s.ncols() != problem.param_dim() {
        return Err(Error::DimensionMismatch {
            what: "sensitivity matrix",
            expected: problem.state_dim() * problem.param_dim(),
            got: s.nrows() * s.ncols(),
        });
    }
    let (gx, gp) = constraint_partials(problem, state, problem.nominal_param(), time, scheme)?;
    Ok(gx * s + gp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub scheme: JacobianScheme,
    /// RK4 steps per grid interval (at least 10 are taken).
    pub substeps: usize,
}

impl PropagationOptions {
    pub fn for_problem(problem: &OcpProblem) -> Self {
        Self {
            scheme: JacobianScheme::preferred(problem),
            substeps: 10,
        }
    }
}

/// Integrates `x' = f(x, p0, u, t)` together with `S' = A S + B`, `S(t0) = 0`.
pub fn propagate_augmented(
    problem: &OcpProblem,
    control: &ControlSignal,
    grid: &[f64],
) -> Result<Trajectory> {
    propagate_augmented_with(problem, control, grid, PropagationOptions::for_problem(problem))
}

pub fn propagate_augmented_with(
    problem: &OcpProblem,
    control: &ControlSignal,
    grid: &[f64],
    options: PropagationOptions,
) -> Result<Trajectory> {
    let (n, l) = (problem.state_dim(), problem.param_dim());
    check_len("control", problem.control_dim(), control.dim())?;
    if grid.is_empty() || (grid[0] - problem.initial_time()).abs() > 1e-12 * grid[0].abs().max(1.0) {
        return Err(Error::InvalidArgument(
            "propagation grid must start at the initial time".into(),
        ));
    }
    let p0 = problem.nominal_param().to_vec();
    let mut failure: Option<Error> = None;
    let rhs = |t: f64, z: &[f64], out: &mut [f64]| {
        let mut u = control.eval(t);
        problem.clamp_control(&mut u);
        let x = &z[..n];
        problem.dynamics(x, &p0, &u, t, &mut out[..n]);
        match jacobians_at(problem, x, &p0, &u, t, options.scheme) {
            Ok(JacobianPair { a, b }) => {
                let s = DMatrix::from_column_slice(n, l, &z[n..]);
                let sdot = a * s + b;
                out[n..].copy_from_slice(sdot.as_slice());
            }
            Err(e) => {
                // forces the integrator to stop with a divergence
                out.iter_mut().for_each(|v| *v = f64::NAN);
                if failure.is_none() {
                    failure = Some(e);
                }
            }
        }
    };
    let mut z0 = vec![0.0; n + n * l];
    z0[..n].copy_from_slice(problem.initial_state());
    let result = integrate_on_grid(rhs, &z0, grid, options.substeps.max(10));
    if let Some(e) = failure {
        return Err(e);
    }
    let zs = result?;
    let states = zs.iter().map(|z| z[..n].to_vec()).collect();
    let sens = zs
        .iter()
        .map(|z| DMatrix::from_column_slice(n, l, &z[n..]))
        .collect();
    let controls = grid
        .iter()
        .map(|&t| {
            let mut u = control.eval(t);
            problem.clamp_control(&mut u);
            u
        })
        .collect();
    let mut traj = Trajectory::new(grid.to_vec(), states, controls)?;
    traj.sensitivities = Some(sens);
    traj.annotate(problem)?;
    Ok(traj)
}

/// Central-difference oracle for `S` on `grid`: the states are
/// re-integrated with each parameter moved by `+-h`.
pub fn finite_difference_sensitivities(
    problem: &OcpProblem,
    control: &ControlSignal,
    grid: &[f64],
    h: f64,
    substeps: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let (n, l) = (problem.state_dim(), problem.param_dim());
    let mut out = vec![DMatrix::zeros(n, l); grid.len()];
    for j in 0..l {
        let mut p = problem.nominal_param().to_vec();
        p[j] += h;
        let plus = propagate_states(problem, &p, control, grid, substeps)?;
        p[j] -= 2.0 * h;
        let minus = propagate_states(problem, &p, control, grid, substeps)?;
        for (node, s) in out.iter_mut().enumerate() {
            for i in 0..n {
                s[(i, j)] = (plus[node][i] - minus[node][i]) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

/// `x(p0, t) + S(t) delta_p` at every node.
pub fn first_order_predict(traj: &Trajectory, delta_p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let sens = traj
        .sensitivities
        .as_ref()
        .ok_or_else(|| Error::Precondition("trajectory has no sensitivities".into()))?;
    traj.states
        .iter()
        .zip(sens)
        .map(|(x, s)| {
            check_len("delta_p", s.ncols(), delta_p.len())?;
            Ok(x
                .iter()
                .enumerate()
                .map(|(i, xi)| xi + (0..s.ncols()).map(|j| s[(i, j)] * delta_p[j]).sum::<f64>())
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bilinear() -> OcpProblem {
        OcpProblem::builder(1, 1, 1)
            .dynamics(|x, p, _u, _t, out| out[0] = p[0] * x[0])
            .initial_state(vec![1.0])
            .nominal_param(vec![3.0])
            .final_time_bounds(1.0, 2.0)
            .build()
            .unwrap()
    }

    fn drift() -> OcpProblem {
        // y' = p, scalar
        OcpProblem::builder(1, 1, 1)
            .dynamics(|_x, p, _u, _t, out| out[0] = p[0])
            .initial_state(vec![0.0])
            .nominal_param(vec![1.0])
            .final_time_bounds(1.0, 2.0)
            .build()
            .unwrap()
    }

    fn grid(tf: f64, nodes: usize) -> Vec<f64> {
        (0..nodes).map(|i| tf * i as f64 / (nodes - 1) as f64).collect()
    }

    #[test]
    fn bilinear_jacobian() {
        let j = jacobians(&bilinear(), &[2.0], &[0.0], 0.0, JacobianScheme::FiniteDifference).unwrap();
        assert!((j.a[(0, 0)] - 3.0).abs() < 1e-8);
        assert!((j.b[(0, 0)] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn missing_analytic_jacobian_is_precondition_error() {
        let r = jacobians(&bilinear(), &[2.0], &[0.0], 0.0, JacobianScheme::UserSupplied);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn nonfinite_jacobian_reports_index() {
        let p = OcpProblem::builder(2, 1, 1)
            .dynamics(|x, _p, _u, _t, out| {
                out[0] = 0.0;
                out[1] = if x[1] > 0.5 { f64::INFINITY } else { 0.0 };
            })
            .initial_state(vec![0.0, 0.0])
            .nominal_param(vec![1.0])
            .final_time_bounds(1.0, 2.0)
            .build()
            .unwrap();
        let r = jacobians(&p, &[0.0, 1.0], &[0.0], 0.0, JacobianScheme::FiniteDifference);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn drift_sensitivity_is_elapsed_time() {
        let g = grid(4.0, 9);
        let traj = propagate_augmented(&drift(), &ControlSignal::constant(vec![0.0]), &g).unwrap();
        let s = traj.sensitivities.as_ref().unwrap();
        assert_eq!(s[0][(0, 0)], 0.0);
        for (t, m) in g.iter().zip(s) {
            assert!((m[(0, 0)] - t).abs() < 1e-9);
        }
    }

    #[test]
    fn parameter_free_dynamics_have_zero_sensitivity() {
        let p = OcpProblem::builder(2, 1, 1)
            .dynamics(|x, _p, u, _t, out| {
                out[0] = x[1];
                out[1] = u[0] - x[0];
            })
            .initial_state(vec![1.0, 0.0])
            .nominal_param(vec![0.3])
            .final_time_bounds(1.0, 2.0)
            .build()
            .unwrap();
        let traj = propagate_augmented(&p, &ControlSignal::constant(vec![0.5]), &grid(3.0, 7)).unwrap();
        for m in traj.sensitivities.unwrap() {
            assert_eq!(m.amax(), 0.0);
        }
    }

    #[test]
    fn first_order_prediction_matches_reintegration_for_exponential() {
        let p = bilinear();
        let g = grid(1.0, 11);
        let ctl = ControlSignal::constant(vec![0.0]);
        let traj = propagate_augmented(&p, &ctl, &g).unwrap();
        assert_eq!(first_order_predict(&traj, &[0.0]).unwrap(), traj.states);

        // x = exp(p t): error of the linear prediction is second order in dp
        let err = |dp: f64| {
            let pred = first_order_predict(&traj, &[dp]).unwrap();
            let truth = propagate_states(&p, &[3.0 + dp], &ctl, &g, 10).unwrap();
            pred.iter()
                .zip(&truth)
                .map(|(a, b)| (a[0] - b[0]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn prediction_without_sensitivities_fails() {
        let traj = Trajectory::new(vec![0.0, 1.0], vec![vec![0.0]; 2], vec![vec![0.0]; 2]).unwrap();
        assert!(matches!(
            first_order_predict(&traj, &[0.1]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn constraint_sensitivity_vanishes_for_constant_constraint() {
        let p = OcpProblem::builder(1, 1, 1)
            .dynamics(|_x, p, _u, _t, out| out[0] = p[0])
            .path_constraints(1, |_x, _p, _t, out| out[0] = -1.0)
            .initial_state(vec![0.0])
            .nominal_param(vec![1.0])
            .final_time_bounds(1.0, 2.0)
            .build()
            .unwrap();
        let s = DMatrix::from_element(1, 1, 2.5);
        let sg = constraint_sensitivity(&p, &[0.3], &s, 2.5, JacobianScheme::FiniteDifference).unwrap();
        assert_eq!(sg[(0, 0)], 0.0);
    }
}
