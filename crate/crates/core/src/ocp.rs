//! Optimal-control problem definition and trajectory bookkeeping.
//!
//! A problem is a bundle of pure callbacks over `(x, p, u, t)` plus the
//! fixed data of the problem (initial state, nominal parameters, control box,
//! final-time search interval). Path constraints are feasible iff every
//! component is `<= 0`; the terminal condition is a residual that should
//! vanish.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// `f(x, p, u, t)` written into `out` (length `n`).
pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync>;
/// Analytic `(df/dx, df/dp)` written into `(n x n, n x l)` matrices.
pub type DynamicsJacobianFn =
    Arc<dyn Fn(&[f64], &[f64], &[f64], f64, &mut DMatrix<f64>, &mut DMatrix<f64>) + Send + Sync>;
/// `g(x, p, t)` written into `out` (length `k`).
pub type ConstraintFn = Arc<dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync>;
/// Analytic `(dg/dx, dg/dp)` written into `(k x n, k x l)` matrices.
pub type ConstraintJacobianFn =
    Arc<dyn Fn(&[f64], &[f64], f64, &mut DMatrix<f64>, &mut DMatrix<f64>) + Send + Sync>;
/// `psi(x, t)` written into `out` (length `q`).
pub type TerminalConditionFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct OcpProblem {
    name: String,
    state_dim: usize,
    param_dim: usize,
    control_dim: usize,
    constraint_dim: usize,
    terminal_dim: usize,
    dynamics: DynamicsFn,
    dynamics_jacobian: Option<DynamicsJacobianFn>,
    path_constraints: ConstraintFn,
    constraint_jacobian: Option<ConstraintJacobianFn>,
    terminal_condition: TerminalConditionFn,
    terminal_cost: TerminalCostFn,
    running_cost: RunningCostFn,
    initial_state: Vec<f64>,
    initial_time: f64,
    nominal_param: Vec<f64>,
    control_lower: Vec<f64>,
    control_upper: Vec<f64>,
    final_time_bounds: (f64, f64),
    sensitivity_mask: Option<Vec<(usize, usize)>>,
    state_names: Vec<String>,
    control_names: Vec<String>,
    param_names: Vec<String>,
    angle_controls: Vec<bool>,
}

impl fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpProblem")
            .field("name", &self.name)
            .field("n", &self.state_dim)
            .field("l", &self.param_dim)
            .field("m", &self.control_dim)
            .field("k", &self.constraint_dim)
            .field("q", &self.terminal_dim)
            .field("initial_state", &self.initial_state)
            .field("nominal_param", &self.nominal_param)
            .field("final_time_bounds", &self.final_time_bounds)
            .finish()
    }
}

impl OcpProblem {
    pub fn builder(state_dim: usize, param_dim: usize, control_dim: usize) -> OcpBuilder {
        OcpBuilder::new(state_dim, param_dim, control_dim)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }
    pub fn control_dim(&self) -> usize {
        self.control_dim
    }
    pub fn constraint_dim(&self) -> usize {
        self.constraint_dim
    }
    pub fn terminal_dim(&self) -> usize {
        self.terminal_dim
    }
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }
    pub fn initial_time(&self) -> f64 {
        self.initial_time
    }
    pub fn nominal_param(&self) -> &[f64] {
        &self.nominal_param
    }
    pub fn control_lower(&self) -> &[f64] {
        &self.control_lower
    }
    pub fn control_upper(&self) -> &[f64] {
        &self.control_upper
    }
    pub fn final_time_bounds(&self) -> (f64, f64) {
        self.final_time_bounds
    }
    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }
    pub fn control_names(&self) -> &[String] {
        &self.control_names
    }
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }
    /// Controls that are angles: optimized over all of R, reported modulo 2*pi.
    pub fn angle_controls(&self) -> &[bool] {
        &self.angle_controls
    }

    /// Entries `(state, param)` of `S` that may be nonzero. `None` means the
    /// full `n x l` matrix is propagated.
    pub fn sensitivity_mask(&self) -> Option<&[(usize, usize)]> {
        self.sensitivity_mask.as_deref()
    }

    /// Tracked sensitivity entries in column-major (`vec`) order.
    pub fn sensitivity_entries(&self) -> Vec<(usize, usize)> {
        match &self.sensitivity_mask {
            Some(mask) => mask.clone(),
            None => (0..self.param_dim)
                .flat_map(|j| (0..self.state_dim).map(move |i| (i, j)))
                .collect(),
        }
    }

    pub fn dynamics(&self, x: &[f64], p: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        (self.dynamics)(x, p, u, t, out)
    }

    pub fn dynamics_jacobian_fn(&self) -> Option<&DynamicsJacobianFn> {
        self.dynamics_jacobian.as_ref()
    }

    pub fn constraints_into(&self, x: &[f64], p: &[f64], t: f64, out: &mut [f64]) {
        (self.path_constraints)(x, p, t, out)
    }

    pub fn constraint_jacobian_fn(&self) -> Option<&ConstraintJacobianFn> {
        self.constraint_jacobian.as_ref()
    }

    pub fn terminal_residual_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.terminal_condition)(x, t, out)
    }

    pub fn terminal_residual(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.terminal_dim];
        self.terminal_residual_into(x, t, &mut out);
        out
    }

    pub fn terminal_cost(&self, x: &[f64], t: f64) -> f64 {
        (self.terminal_cost)(x, t)
    }

    pub fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> f64 {
        (self.running_cost)(x, u, t)
    }

    /// Returns a copy with a different nominal parameter vector.
    pub fn with_nominal_param(&self, p: &[f64]) -> Result<OcpProblem> {
        check_len("nominal_param", self.param_dim, p.len())?;
        let mut out = self.clone();
        out.nominal_param = p.to_vec();
        Ok(out)
    }

    /// Returns a copy with different final-time search bounds.
    pub fn with_final_time_bounds(&self, lo: f64, hi: f64) -> Result<OcpProblem> {
        if !(lo > self.initial_time) || !(hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "final_time_bounds ({lo}, {hi}) must satisfy t0 < lo <= hi"
            )));
        }
        let mut out = self.clone();
        out.final_time_bounds = (lo, hi);
        Ok(out)
    }

    /// Clamps `u` into the control box.
    pub fn clamp_control(&self, u: &mut [f64]) {
        for ((ui, lo), hi) in u
            .iter_mut()
            .zip(&self.control_lower)
            .zip(&self.control_upper)
        {
            *ui = ui.clamp(*lo, *hi);
        }
    }
}

/// Evaluates `g(state, param, time)`.
pub fn evaluate_constraints(
    problem: &OcpProblem,
    state: &[f64],
    param: &[f64],
    time: f64,
) -> Result<Vec<f64>> {
    check_len("state", problem.state_dim, state.len())?;
    check_len("param", problem.param_dim, param.len())?;
    let mut out = vec![0.0; problem.constraint_dim];
    problem.constraints_into(state, param, time, &mut out);
    Ok(out)
}

/// `phi(x(t_f), t_f) + integral of L`, the integral by the trapezoidal rule on
/// the trajectory grid.
pub fn evaluate_cost(problem: &OcpProblem, traj: &Trajectory) -> Result<f64> {
    traj.check_dims(problem)?;
    let last = traj.states.len() - 1;
    let mut cost = problem.terminal_cost(&traj.states[last], traj.final_time);
    let running: Vec<f64> = traj
        .times
        .iter()
        .zip(traj.states.iter().zip(&traj.controls))
        .map(|(&t, (x, u))| problem.running_cost(x, u, t))
        .collect();
    cost += trapezoid(&traj.times, &running);
    Ok(cost)
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest path-constraint value over the grid (`-inf` when `k = 0`).
    pub max_path_value: f64,
    pub worst_node: Option<usize>,
    pub worst_time: Option<f64>,
    pub worst_component: Option<usize>,
    pub terminal_residual_inf: f64,
}

/// Feasible iff every path constraint is `<= tol` on the grid and the
/// terminal residual satisfies `||psi||_inf <= tol`.
pub fn check_feasibility(
    problem: &OcpProblem,
    traj: &Trajectory,
    tol: f64,
) -> Result<FeasibilityReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be >= 0")));
    }
    traj.check_dims(problem)?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = None;
    let mut g = vec![0.0; problem.constraint_dim];
    for (node, (x, &t)) in traj.states.iter().zip(&traj.times).enumerate() {
        problem.constraints_into(x, &problem.nominal_param, t, &mut g);
        for (c, &v) in g.iter().enumerate() {
            if v > worst || v.is_nan() {
                worst = if v.is_nan() { f64::INFINITY } else { v };
                worst_at = Some((node, c));
            }
        }
    }
    let last = traj.states.len() - 1;
    let residual = problem.terminal_residual(&traj.states[last], traj.final_time);
    let terminal_residual_inf = inf_norm(&residual);
    let feasible = worst <= tol && terminal_residual_inf <= tol;
    Ok(FeasibilityReport {
        feasible,
        max_path_value: worst,
        worst_node: worst_at.map(|w| w.0),
        worst_time: worst_at.map(|w| traj.times[w.0]),
        worst_component: worst_at.map(|w| w.1),
        terminal_residual_inf,
    })
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| {
        if x.is_nan() {
            f64::INFINITY
        } else {
            acc.max(x.abs())
        }
    })
}

/// A discretized trajectory with optional sensitivity history.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// `S(t)` at each node, `n x l`.
    pub sensitivities: Option<Vec<DMatrix<f64>>>,
    pub final_time: f64,
    pub nominal_cost: f64,
    pub rcs_cost: f64,
    pub constraint_values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, controls: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty time grid".into()));
        }
        check_len("states", times.len(), states.len())?;
        check_len("controls", times.len(), controls.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "time grid must be strictly increasing".into(),
            ));
        }
        let final_time = *times.last().unwrap();
        Ok(Self {
            times,
            states,
            controls,
            sensitivities: None,
            final_time,
            nominal_cost: 0.0,
            rcs_cost: 0.0,
            constraint_values: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn check_dims(&self, problem: &OcpProblem) -> Result<()> {
        let len = self.times.len();
        if len < 2 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least two nodes".into(),
            ));
        }
        check_len("states", len, self.states.len())?;
        check_len("controls", len, self.controls.len())?;
        for x in &self.states {
            check_len("state", problem.state_dim, x.len())?;
        }
        for u in &self.controls {
            check_len("control", problem.control_dim, u.len())?;
        }
        if let Some(s) = &self.sensitivities {
            check_len("sensitivities", len, s.len())?;
            for m in s {
                if m.nrows() != problem.state_dim || m.ncols() != problem.param_dim {
                    return Err(Error::DimensionMismatch {
                        what: "sensitivity matrix",
                        expected: problem.state_dim * problem.param_dim,
                        got: m.nrows() * m.ncols(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Fills `constraint_values` and `nominal_cost` from the problem.
    pub fn annotate(&mut self, problem: &OcpProblem) -> Result<()> {
        self.check_dims(problem)?;
        self.constraint_values = self
            .states
            .iter()
            .zip(&self.times)
            .map(|(x, &t)| {
                let mut g = vec![0.0; problem.constraint_dim];
                problem.constraints_into(x, problem.nominal_param(), t, &mut g);
                g
            })
            .collect();
        self.nominal_cost = evaluate_cost(problem, self)?;
        Ok(())
    }

    /// Linear interpolation of the state at time `t` (clamped to the grid).
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        interpolate_rows(&self.times, &self.states, t)
    }

    pub fn control_at(&self, t: f64) -> Vec<f64> {
        interpolate_rows(&self.times, &self.controls, t)
    }

    /// Resamples states and controls onto `times` by linear interpolation.
    /// Sensitivities are dropped.
    pub fn resample(&self, times: &[f64]) -> Result<Trajectory> {
        let states = times.iter().map(|&t| self.state_at(t)).collect();
        let controls = times.iter().map(|&t| self.control_at(t)).collect();
        Trajectory::new(times.to_vec(), states, controls)
    }
}

pub(crate) fn interpolate_rows(times: &[f64], rows: &[Vec<f64>], t: f64) -> Vec<f64> {
    let last = times.len() - 1;
    if t <= times[0] {
        return rows[0].clone();
    }
    if t >= times[last] {
        return rows[last].clone();
    }
    let hi = times.partition_point(|&s| s <= t).min(last);
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    rows[lo]
        .iter()
        .zip(&rows[hi])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

pub struct OcpBuilder {
    name: String,
    n: usize,
    l: usize,
    m: usize,
    k: usize,
    q: usize,
    dynamics: Option<DynamicsFn>,
    dynamics_jacobian: Option<DynamicsJacobianFn>,
    path_constraints: Option<ConstraintFn>,
    constraint_jacobian: Option<ConstraintJacobianFn>,
    terminal_condition: Option<TerminalConditionFn>,
    terminal_cost: Option<TerminalCostFn>,
    running_cost: Option<RunningCostFn>,
    initial_state: Option<Vec<f64>>,
    initial_time: f64,
    nominal_param: Option<Vec<f64>>,
    control_bounds: Option<(Vec<f64>, Vec<f64>)>,
    final_time_bounds: Option<(f64, f64)>,
    sensitivity_mask: Option<Vec<(usize, usize)>>,
    state_names: Option<Vec<String>>,
    control_names: Option<Vec<String>>,
    param_names: Option<Vec<String>>,
    angle_controls: Option<Vec<bool>>,
}

impl OcpBuilder {
    fn new(n: usize, l: usize, m: usize) -> Self {
        Self {
            name: "ocp".into(),
            n,
            l,
            m,
            k: 0,
            q: 0,
            dynamics: None,
            dynamics_jacobian: None,
            path_constraints: None,
            constraint_jacobian: None,
            terminal_condition: None,
            terminal_cost: None,
            running_cost: None,
            initial_state: None,
            initial_time: 0.0,
            nominal_param: None,
            control_bounds: None,
            final_time_bounds: None,
            sensitivity_mask: None,
            state_names: None,
            control_names: None,
            param_names: None,
            angle_controls: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dynamics(
        mut self,
        f: impl Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.dynamics = Some(Arc::new(f));
        self
    }

    pub fn dynamics_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64], &[f64], f64, &mut DMatrix<f64>, &mut DMatrix<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.dynamics_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn path_constraints(
        mut self,
        k: usize,
        g: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.k = k;
        self.path_constraints = Some(Arc::new(g));
        self
    }

    pub fn constraint_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64], f64, &mut DMatrix<f64>, &mut DMatrix<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.constraint_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn terminal_condition(
        mut self,
        q: usize,
        psi: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.q = q;
        self.terminal_condition = Some(Arc::new(psi));
        self
    }

    pub fn terminal_cost(mut self, phi: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal_cost = Some(Arc::new(phi));
        self
    }

    pub fn running_cost(
        mut self,
        l: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Some(Arc::new(l));
        self
    }

    pub fn initial_state(mut self, x0: Vec<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    pub fn initial_time(mut self, t0: f64) -> Self {
        self.initial_time = t0;
        self
    }

    pub fn nominal_param(mut self, p0: Vec<f64>) -> Self {
        self.nominal_param = Some(p0);
        self
    }

    pub fn control_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.control_bounds = Some((lower, upper));
        self
    }

    pub fn final_time_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.final_time_bounds = Some((lo, hi));
        self
    }

    pub fn sensitivity_mask(mut self, entries: Vec<(usize, usize)>) -> Self {
        self.sensitivity_mask = Some(entries);
        self
    }

    pub fn state_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.state_names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn control_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.control_names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn param_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.param_names = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn angle_controls(mut self, flags: Vec<bool>) -> Self {
        self.angle_controls = Some(flags);
        self
    }

    pub fn build(self) -> Result<OcpProblem> {
        let (n, l, m) = (self.n, self.l, self.m);
        if n == 0 || l == 0 || m == 0 {
            return Err(Error::InvalidArgument(
                "state, parameter and control dimensions must be positive".into(),
            ));
        }
        let dynamics = self
            .dynamics
            .ok_or_else(|| Error::InvalidArgument("dynamics not set".into()))?;
        let initial_state = self
            .initial_state
            .ok_or_else(|| Error::InvalidArgument("initial state not set".into()))?;
        check_len("initial_state", n, initial_state.len())?;
        let nominal_param = self
            .nominal_param
            .ok_or_else(|| Error::InvalidArgument("nominal parameter not set".into()))?;
        check_len("nominal_param", l, nominal_param.len())?;
        let (control_lower, control_upper) = self.control_bounds.unwrap_or_else(|| {
            (vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m])
        });
        check_len("control_lower", m, control_lower.len())?;
        check_len("control_upper", m, control_upper.len())?;
        if let Some(i) = (0..m).find(|&i| !(control_lower[i] <= control_upper[i])) {
            return Err(Error::InvalidArgument(format!(
                "control bound {i}: lower {} > upper {}",
                control_lower[i], control_upper[i]
            )));
        }
        let t0 = self.initial_time;
        let final_time_bounds = self
            .final_time_bounds
            .ok_or_else(|| Error::InvalidArgument("final time bounds not set".into()))?;
        if !(final_time_bounds.0 > t0) || !(final_time_bounds.1 >= final_time_bounds.0) {
            return Err(Error::InvalidArgument(format!(
                "final_time_bounds {:?} must satisfy t0 < lo <= hi",
                final_time_bounds
            )));
        }
        if let Some(mask) = &self.sensitivity_mask {
            for &(i, j) in mask {
                if i >= n || j >= l {
                    return Err(Error::InvalidArgument(format!(
                        "sensitivity mask entry ({i}, {j}) out of range"
                    )));
                }
            }
            let mut sorted = mask.clone();
            sorted.sort_by_key(|&(i, j)| (j, i));
            sorted.dedup();
            if sorted.len() != mask.len() {
                return Err(Error::InvalidArgument(
                    "duplicate sensitivity mask entries".into(),
                ));
            }
        }
        let names = |given: Option<Vec<String>>, len: usize, prefix: &str| -> Result<Vec<String>> {
            match given {
                Some(v) => {
                    check_len("names", len, v.len())?;
                    Ok(v)
                }
                None => Ok((0..len).map(|i| format!("{prefix}{i}")).collect()),
            }
        };
        let state_names = names(self.state_names, n, "x")?;
        let control_names = names(self.control_names, m, "u")?;
        let param_names = names(self.param_names, l, "p")?;
        let angle_controls = self.angle_controls.unwrap_or_else(|| vec![false; m]);
        check_len("angle_controls", m, angle_controls.len())?;

        let k = self.k;
        let q = self.q;
        let problem = OcpProblem {
            name: self.name,
            state_dim: n,
            param_dim: l,
            control_dim: m,
            constraint_dim: k,
            terminal_dim: q,
            dynamics,
            dynamics_jacobian: self.dynamics_jacobian,
            path_constraints: self
                .path_constraints
                .unwrap_or_else(|| Arc::new(|_: &[f64], _: &[f64], _: f64, _: &mut [f64]| {})),
            constraint_jacobian: self.constraint_jacobian,
            terminal_condition: self
                .terminal_condition
                .unwrap_or_else(|| Arc::new(|_: &[f64], _: f64, _: &mut [f64]| {})),
            terminal_cost: self
                .terminal_cost
                .unwrap_or_else(|| Arc::new(|_: &[f64], _: f64| 0.0)),
            running_cost: self
                .running_cost
                .unwrap_or_else(|| Arc::new(|_: &[f64], _: &[f64], _: f64| 0.0)),
            initial_state,
            initial_time: t0,
            nominal_param,
            control_lower,
            control_upper,
            final_time_bounds,
            sensitivity_mask: self.sensitivity_mask,
            state_names,
            control_names,
            param_names,
            angle_controls,
        };
        problem.validate_callbacks()?;
        Ok(problem)
    }
}

impl OcpProblem {
    /// Evaluates dynamics and constraints at `(x0, p0, u, t0)` for `u` at the
    /// box corners and centre (infinite bounds replaced by 0).
    fn validate_callbacks(&self) -> Result<()> {
        let probe = |pick: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            self.control_lower
                .iter()
                .zip(&self.control_upper)
                .map(|(&lo, &hi)| {
                    let lo = if lo.is_finite() { lo } else { hi.min(0.0) };
                    let hi = if hi.is_finite() { hi } else { lo.max(0.0) };
                    pick(lo, hi)
                })
                .collect()
        };
        let controls = [
            probe(&|lo, _| lo),
            probe(&|_, hi| hi),
            probe(&|lo, hi| 0.5 * (lo + hi)),
        ];
        let mut fx = vec![0.0; self.state_dim];
        let mut g = vec![0.0; self.constraint_dim];
        for u in &controls {
            self.dynamics(&self.initial_state, &self.nominal_param, u, self.initial_time, &mut fx);
            if let Some(index) = fx.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "dynamics at initial state",
                    index,
                });
            }
        }
        self.constraints_into(&self.initial_state, &self.nominal_param, self.initial_time, &mut g);
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "path constraints at initial state",
                index,
            });
        }
        Ok(())
    }
}
