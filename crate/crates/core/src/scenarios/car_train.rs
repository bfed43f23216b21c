use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use super::{check_positive, Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::ocp::{OcpProblem, Trajectory};

/// Largest `((x - x_o) / w_o)^gamma` passed to `exp`; beyond this the window
/// is exactly zero in double precision.
const MAX_EXPONENT: f64 = 750.0;

/// Car on the x-axis crossing a rail track at `x = crossing_x` while a train
/// moves down the track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarTrainConfig {
    pub start: f64,
    pub target: f64,
    pub crossing_x: f64,
    pub track_half_width: f64,
    pub safe_distance: f64,
    pub gamma: u32,
    pub max_speed: f64,
    pub nominal_train_speed: f64,
    /// Train `y` at `t = 0` (`c`).
    pub train_y0: f64,
    pub final_time_bounds: [f64; 2],
    /// The file's `scenario` key, accepted and ignored here.
    #[doc(hidden)]
    #[serde(rename = "scenario", default, skip_serializing)]
    pub tag: IgnoredAny,
}

impl Default for CarTrainConfig {
    fn default() -> Self {
        Self {
            start: 0.0,
            target: 10.0,
            crossing_x: 5.0,
            track_half_width: 0.5,
            safe_distance: 0.6,
            gamma: 20,
            max_speed: 1.0,
            nominal_train_speed: 0.25,
            train_y0: 2.0,
            final_time_bounds: [1.0, 40.0],
            tag: IgnoredAny,
        }
    }
}

impl CarTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 2 || !self.gamma.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "gamma must be a positive even integer, got {}",
                self.gamma
            )));
        }
        check_positive("track_half_width", self.track_half_width)?;
        check_positive("safe_distance", self.safe_distance)?;
        check_positive("max_speed", self.max_speed)?;
        if !(self.nominal_train_speed >= 0.0) {
            return Err(Error::Config("nominal_train_speed must be >= 0".into()));
        }
        let [lo, hi] = self.final_time_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("final_time_bounds must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

/// `exp(-((x - x_o) / w_o)^gamma)`, a smooth window approximating the
/// indicator of `|x - x_o| <= w_o`.
pub fn super_gaussian(x: f64, x_o: f64, w_o: f64, gamma: u32) -> f64 {
    let e = ((x - x_o) / w_o).powi(gamma as i32);
    (-e.min(MAX_EXPONENT)).exp()
}

/// Derivative of [`super_gaussian`] with respect to `x`.
pub fn super_gaussian_dx(x: f64, x_o: f64, w_o: f64, gamma: u32) -> f64 {
    let sg = super_gaussian(x, x_o, w_o, gamma);
    if sg == 0.0 {
        return 0.0;
    }
    let z = (x - x_o) / w_o;
    -(gamma as f64) / w_o * z.powi(gamma as i32 - 1) * sg
}

pub fn build_car_train(cfg: &CarTrainConfig) -> Result<OcpProblem> {
    cfg.validate()?;
    let (xo, w, gamma, r, target) = (
        cfg.crossing_x,
        cfg.track_half_width,
        cfg.gamma,
        cfg.safe_distance,
        cfg.target,
    );
    OcpProblem::builder(2, 1, 1)
        .name("car_train")
        .dynamics(|_x, p, u, _t, out| {
            out[0] = u[0];
            out[1] = -p[0];
        })
        .dynamics_jacobian(|_x, _p, _u, _t, a, b| {
            a.fill(0.0);
            b.fill(0.0);
            b[(1, 0)] = -1.0;
        })
        // the car stays on the axis, so y_a = 0 in the separation term
        .path_constraints(1, move |x, _p, _t, out| {
            out[0] = super_gaussian(x[0], xo, w, gamma) * (r * r - x[1] * x[1]);
        })
        .constraint_jacobian(move |x, _p, _t, gx, gp| {
            gx[(0, 0)] = super_gaussian_dx(x[0], xo, w, gamma) * (r * r - x[1] * x[1]);
            gx[(0, 1)] = -2.0 * super_gaussian(x[0], xo, w, gamma) * x[1];
            gp.fill(0.0);
        })
        .terminal_condition(1, move |x, _t, out| out[0] = x[0] - target)
        .terminal_cost(|_x, t| t)
        .initial_state(vec![cfg.start, cfg.train_y0])
        .nominal_param(vec![cfg.nominal_train_speed])
        .control_bounds(vec![0.0], vec![cfg.max_speed])
        .final_time_bounds(cfg.final_time_bounds[0], cfg.final_time_bounds[1])
        .state_names(["x_a", "y_o"])
        .control_names(["u"])
        .param_names(["v_o"])
        .build()
}

/// Drive at `max_speed`, optionally stopping at `stop_x` until `resume_t`.
fn drive_guess(problem: &OcpProblem, cfg: &CarTrainConfig, stop: Option<(f64, f64)>) -> Result<Trajectory> {
    let v = cfg.max_speed;
    let mut knots = vec![(0.0, cfg.start)];
    if let Some((stop_x, resume_t)) = stop {
        let t1 = (stop_x - cfg.start) / v;
        knots.push((t1, stop_x));
        knots.push((resume_t.max(t1 + 1e-3), stop_x));
    }
    let (tl, xl) = *knots.last().unwrap();
    knots.push((tl + (cfg.target - xl) / v, cfg.target));
    let tf = knots.last().unwrap().0;
    let count = 200;
    let mut times: Vec<f64> = (0..count).map(|i| tf * i as f64 / (count - 1) as f64).collect();
    times.extend(knots.iter().map(|k| k.0));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut states = Vec::with_capacity(times.len());
    let mut controls = Vec::with_capacity(times.len());
    for &t in &times {
        let seg = knots.windows(2).position(|k| t <= k[1].0).unwrap_or(knots.len() - 2);
        let ((t0, x0), (t1, x1)) = (knots[seg], knots[seg + 1]);
        let a = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        let moving = (x1 - x0).abs() > 0.0;
        states.push(vec![x0 + a * (x1 - x0), cfg.train_y0 - problem.nominal_param()[0] * t]);
        controls.push(vec![if moving { v } else { 0.0 }]);
    }
    Trajectory::new(times, states, controls)
}

pub(crate) fn scenario(cfg: &CarTrainConfig) -> Result<Scenario> {
    let problem = build_car_train(cfg)?;
    let mut seeds = vec![drive_guess(&problem, cfg, None)?];
    let v_o = cfg.nominal_train_speed;
    if v_o > 0.0 {
        // wait before the track until the train is well past the axis
        let stop_x = cfg.crossing_x - cfg.track_half_width - 1.0;
        for margin in [1.0, 2.0] {
            let clear = cfg.crossing_x - cfg.track_half_width - stop_x;
            let resume = (cfg.train_y0 + cfg.safe_distance + margin) / v_o - clear / cfg.max_speed;
            if stop_x > cfg.start && resume > 0.0 {
                seeds.push(drive_guess(&problem, cfg, Some((stop_x, resume)))?);
            }
        }
    }
    Ok(Scenario {
        kind: ScenarioKind::CarTrain,
        problem,
        seeds,
        obstacle_x: vec![cfg.crossing_x],
        safe_distance: vec![cfg.safe_distance],
        track_half_width: Some(cfg.track_half_width),
        constraint_exponent: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn super_gaussian_examples() {
        assert_eq!(super_gaussian(5.0, 5.0, 0.5, 20), 1.0);
        for gamma in [2, 4, 20, 200] {
            assert_relative_eq!(super_gaussian(5.5, 5.0, 0.5, gamma), (-1.0_f64).exp(), max_relative = 1e-14);
        }
        assert!(super_gaussian(5.75, 5.0, 0.5, 200) < 1e-30);
        let far = super_gaussian(1e6, 0.0, 0.5, 200);
        assert_eq!(far, 0.0);
        assert_eq!(super_gaussian_dx(1e6, 0.0, 0.5, 200), 0.0);
    }

    #[test]
    fn super_gaussian_derivative_matches_differences() {
        for x in [4.3, 4.8, 5.1, 5.45, 5.6] {
            let h = 1e-6;
            let fd = (super_gaussian(x + h, 5.0, 0.5, 20) - super_gaussian(x - h, 5.0, 0.5, 20)) / (2.0 * h);
            assert_relative_eq!(super_gaussian_dx(x, 5.0, 0.5, 20), fd, epsilon = 1e-8, max_relative = 1e-5);
        }
    }

    #[test]
    fn default_configuration_dimensions() {
        let p = build_car_train(&CarTrainConfig::default()).unwrap();
        assert_eq!((p.state_dim(), p.param_dim(), p.constraint_dim()), (2, 1, 1));
        assert_eq!(p.control_upper(), &[1.0]);
    }

    #[test]
    fn rejects_odd_gamma() {
        let cfg = CarTrainConfig { gamma: 3, ..Default::default() };
        assert!(matches!(build_car_train(&cfg), Err(Error::Config(_))));
        let cfg = CarTrainConfig { track_half_width: 0.0, ..Default::default() };
        assert!(build_car_train(&cfg).is_err());
    }

    #[test]
    fn indicator_suppression_far_from_crossing() {
        let cfg = CarTrainConfig::default();
        let p = build_car_train(&cfg).unwrap();
        let mut g = [0.0];
        for x in [3.4, 6.6, 0.0, 10.0] {
            for y in [0.0, 0.3, -0.5] {
                p.constraints_into(&[x, y], &[0.25], 0.0, &mut g);
                let gy = (cfg.safe_distance.powi(2) - y * y).abs();
                assert!(g[0].abs() < 1e-15 * gy, "x={x} y={y} g={}", g[0]);
            }
        }
    }
}
