use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use super::{arc_guess, check_positive, Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::ocp::OcpProblem;
use crate::relevance::RelevanceSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub x: f64,
    pub y0: f64,
    /// `+1` moves toward `+y`, `-1` toward `-y`.
    pub direction: f64,
    #[serde(default = "default_obstacle_speed")]
    pub speed: f64,
    #[serde(default = "default_safe_distance")]
    pub safe_distance: f64,
}

fn default_obstacle_speed() -> f64 {
    0.25
}

fn default_safe_distance() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiObstacleConfig {
    /// Optional count; must match `obstacles` when given.
    pub num_obstacles: Option<usize>,
    pub obstacles: Vec<ObstacleSpec>,
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub max_speed: f64,
    /// Weight of the RCS penalty, `Q = alpha I`.
    pub alpha: f64,
    pub final_time_bounds: [f64; 2],
    /// Relevance function used with this layout; command-line flags take
    /// precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceSpec>,
    /// The file's `scenario` key, accepted and ignored here.
    #[doc(hidden)]
    #[serde(rename = "scenario", default, skip_serializing)]
    pub tag: IgnoredAny,
}

impl Default for MultiObstacleConfig {
    fn default() -> Self {
        Self {
            num_obstacles: None,
            obstacles: Vec::new(),
            start: [0.0, 0.0],
            target: [30.0, 0.0],
            max_speed: 1.0,
            alpha: 0.0,
            final_time_bounds: [1.0, 90.0],
            relevance: None,
            tag: IgnoredAny,
        }
    }
}

impl MultiObstacleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obstacles.is_empty() {
            return Err(Error::Config("at least one obstacle is required".into()));
        }
        if let Some(n) = self.num_obstacles {
            if n != self.obstacles.len() {
                return Err(Error::Config(format!(
                    "num_obstacles = {n} but {} obstacle records given",
                    self.obstacles.len()
                )));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.direction != 1.0 && o.direction != -1.0 {
                return Err(Error::Config(format!("obstacle {i}: direction must be +1 or -1")));
            }
            check_positive("safe_distance", o.safe_distance)?;
            if !(o.speed >= 0.0) {
                return Err(Error::Config(format!("obstacle {i}: speed must be >= 0")));
            }
        }
        check_positive("max_speed", self.max_speed)?;
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be >= 0".into()));
        }
        let [lo, hi] = self.final_time_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("final_time_bounds must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

/// State `(x_a, y_a, y_o1 .. y_oN)`, controls `(theta, v_a)`, parameters
/// `(v_o1 .. v_oN)`. Constraint `i` depends only on parameter `i`, so only
/// the `dy_oi / dv_oi` sensitivities are tracked.
pub fn build_multi_obstacle(cfg: &MultiObstacleConfig) -> Result<OcpProblem> {
    cfg.validate()?;
    let obs = cfg.obstacles.clone();
    let n_obs = obs.len();
    let dirs: Vec<f64> = obs.iter().map(|o| o.direction).collect();
    let dirs_b = dirs.clone();
    let obs_g = obs.clone();
    let obs_j = obs.clone();
    let target = cfg.target;
    let mut x0 = vec![cfg.start[0], cfg.start[1]];
    x0.extend(obs.iter().map(|o| o.y0));
    let mut state_names = vec!["x_a".to_string(), "y_a".to_string()];
    state_names.extend((1..=n_obs).map(|i| format!("y_o{i}")));
    OcpProblem::builder(2 + n_obs, n_obs, 2)
        .name("multi_obstacle")
        .dynamics(move |_x, p, u, _t, out| {
            out[0] = u[1] * u[0].cos();
            out[1] = u[1] * u[0].sin();
            for (i, d) in dirs.iter().enumerate() {
                out[2 + i] = d * p[i];
            }
        })
        .dynamics_jacobian(move |_x, _p, _u, _t, a, b| {
            a.fill(0.0);
            b.fill(0.0);
            for (i, d) in dirs_b.iter().enumerate() {
                b[(2 + i, i)] = *d;
            }
        })
        .path_constraints(n_obs, move |x, _p, _t, out| {
            for (i, o) in obs_g.iter().enumerate() {
                out[i] = o.safe_distance - (x[0] - o.x).hypot(x[1] - x[2 + i]);
            }
        })
        .constraint_jacobian(move |x, _p, _t, gx, gp| {
            gx.fill(0.0);
            gp.fill(0.0);
            for (i, o) in obs_j.iter().enumerate() {
                let (dx, dy) = (x[0] - o.x, x[1] - x[2 + i]);
                let d = dx.hypot(dy).max(1e-12);
                gx[(i, 0)] = -dx / d;
                gx[(i, 1)] = -dy / d;
                gx[(i, 2 + i)] = dy / d;
            }
        })
        .terminal_condition(2, move |x, _t, out| {
            out[0] = x[0] - target[0];
            out[1] = x[1] - target[1];
        })
        .terminal_cost(|_x, t| t)
        .initial_state(x0)
        .nominal_param(obs.iter().map(|o| o.speed).collect())
        .control_bounds(vec![f64::NEG_INFINITY, 0.0], vec![f64::INFINITY, cfg.max_speed])
        .final_time_bounds(cfg.final_time_bounds[0], cfg.final_time_bounds[1])
        .sensitivity_mask((0..n_obs).map(|i| (2 + i, i)).collect())
        .state_names(state_names)
        .control_names(["theta", "v_a"])
        .param_names((1..=n_obs).map(|i| format!("v_o{i}")))
        .angle_controls(vec![true, false])
        .build()
}

pub(crate) fn scenario(cfg: &MultiObstacleConfig) -> Result<Scenario> {
    let problem = build_multi_obstacle(cfg)?;
    let obs = cfg.obstacles.clone();
    let positions = move |t: f64, p: &[f64]| -> Vec<f64> {
        obs.iter()
            .enumerate()
            .map(|(i, o)| o.y0 + o.direction * p[i] * t)
            .collect()
    };
    let mut seeds = Vec::new();
    for h in [0.0, 2.0, -2.0, 4.0, -4.0, 7.0, -7.0] {
        seeds.push(arc_guess(&problem, cfg.start, cfg.target, h, cfg.max_speed, true, &positions)?);
    }
    Ok(Scenario {
        kind: ScenarioKind::MultiObstacle,
        problem,
        seeds,
        obstacle_x: cfg.obstacles.iter().map(|o| o.x).collect(),
        safe_distance: cfg.obstacles.iter().map(|o| o.safe_distance).collect(),
        track_half_width: None,
        constraint_exponent: None,
    })
}
