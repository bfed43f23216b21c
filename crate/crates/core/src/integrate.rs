//! Fixed-step classical Runge-Kutta propagation and piecewise-linear controls.

use crate::error::{check_len, Error, Result};
use crate::ocp::{interpolate_rows, OcpProblem, Trajectory};

/// Piecewise-linear control signal, held constant outside its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty control grid".into()));
        }
        check_len("control values", times.len(), values.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "control grid must be strictly increasing".into(),
            ));
        }
        let m = values[0].len();
        for v in &values {
            check_len("control", m, v.len())?;
        }
        Ok(Self { times, values })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            times: traj.times.clone(),
            values: traj.controls.clone(),
        }
    }

    /// A control that is constant in time.
    pub fn constant(value: Vec<f64>) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        interpolate_rows(&self.times, &self.values, t)
    }
}

/// One classical RK4 step of size `h` from `(t, y)`, written back into `y`.
pub fn rk4_step<F>(rhs: &mut F, t: f64, h: f64, y: &mut [f64], work: &mut Rk4Workspace)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let Rk4Workspace { k1, k2, k3, k4, tmp } = work;
    rhs(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(t + h, tmp, k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Integrates `y' = rhs(t, y)` from `grid[0]`, recording `y` at every grid
/// node and taking `substeps` equal RK4 steps per grid interval.
pub fn integrate_on_grid<F>(
    mut rhs: F,
    y0: &[f64],
    grid: &[f64],
    substeps: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty integration grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "integration grid must be strictly increasing".into(),
        ));
    }
    let substeps = substeps.max(1);
    let mut work = Rk4Workspace::new(y0.len());
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            rk4_step(&mut rhs, t, h, &mut y, &mut work);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time: t + h });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Integrates the state equation with parameter `param` under `control`
/// (clamped to the control box), recording states on `grid`.
pub fn propagate_states(
    problem: &OcpProblem,
    param: &[f64],
    control: &ControlSignal,
    grid: &[f64],
    substeps: usize,
) -> Result<Vec<Vec<f64>>> {
    check_len("param", problem.param_dim(), param.len())?;
    check_len("control", problem.control_dim(), control.dim())?;
    let rhs = |t: f64, x: &[f64], out: &mut [f64]| {
        let mut u = control.eval(t);
        problem.clamp_control(&mut u);
        problem.dynamics(x, param, &u, t, out);
    };
    integrate_on_grid(rhs, problem.initial_state(), grid, substeps)
}
