use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use super::{arc_guess, check_positive, Scenario, ScenarioKind};
use crate::error::{Error, Result};
use crate::ocp::OcpProblem;

/// One moving circular obstacle on the line `x = obstacle_x`, agent moving
/// in the plane toward a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario2DConfig {
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub obstacle_x: f64,
    /// Obstacle `y` at `t = 0` (`c`).
    pub obstacle_y0: f64,
    /// Fixed agent speed, or the speed bound when `speed_control` is set.
    pub agent_speed: f64,
    pub speed_control: bool,
    pub nominal_obstacle_speed: f64,
    pub safe_distance: f64,
    pub lambda: f64,
    pub final_time_bounds: [f64; 2],
    /// The file's `scenario` key, accepted and ignored here.
    #[doc(hidden)]
    #[serde(rename = "scenario", default, skip_serializing)]
    pub tag: IgnoredAny,
}

impl Default for Scenario2DConfig {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0],
            target: [10.0, 0.0],
            obstacle_x: 5.0,
            obstacle_y0: 2.0,
            agent_speed: 1.0,
            speed_control: false,
            nominal_obstacle_speed: 0.25,
            safe_distance: 0.6,
            lambda: 1.0,
            final_time_bounds: [1.0, 60.0],
            tag: IgnoredAny,
        }
    }
}

impl Scenario2DConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("safe_distance", self.safe_distance)?;
        check_positive("lambda", self.lambda)?;
        check_positive("agent_speed", self.agent_speed)?;
        if !(self.nominal_obstacle_speed >= 0.0) {
            return Err(Error::Config("nominal_obstacle_speed must be >= 0".into()));
        }
        let [lo, hi] = self.final_time_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("final_time_bounds must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

/// `g_lambda = r^lambda - dist^lambda`.
pub fn lambda_constraint(agent: [f64; 2], obstacle: [f64; 2], r: f64, lambda: f64) -> f64 {
    let d2 = (agent[0] - obstacle[0]).powi(2) + (agent[1] - obstacle[1]).powi(2);
    r.powf(lambda) - d2.powf(0.5 * lambda)
}

/// Constraint sensitivity to the obstacle speed for an obstacle moving with
/// `y_o' = -v_o`: `-lambda (y_a - y_o) t dist^(lambda - 2)`.
pub fn closed_form_sg_2d(agent: [f64; 2], obstacle: [f64; 2], t: f64, lambda: f64) -> Result<f64> {
    let dy = agent[1] - obstacle[1];
    let d2 = (agent[0] - obstacle[0]).powi(2) + dy * dy;
    if d2 == 0.0 && lambda < 2.0 {
        return Err(Error::Singularity(
            "agent and obstacle coincide; constraint gradient undefined for lambda < 2".into(),
        ));
    }
    Ok(-lambda * dy * t * d2.powf(0.5 * lambda - 1.0))
}

pub fn build_scenario_2d(cfg: &Scenario2DConfig) -> Result<OcpProblem> {
    cfg.validate()?;
    let c = cfg.clone();
    let m = if cfg.speed_control { 2 } else { 1 };
    let (fixed_speed, speed_control) = (cfg.agent_speed, cfg.speed_control);
    let speed = move |u: &[f64]| if speed_control { u[1] } else { fixed_speed };
    let (xo, r, lam) = (cfg.obstacle_x, cfg.safe_distance, cfg.lambda);
    let target = cfg.target;
    let (lower, upper, names) = if speed_control {
        (
            vec![f64::NEG_INFINITY, 0.0],
            vec![f64::INFINITY, cfg.agent_speed],
            vec!["theta", "v_a"],
        )
    } else {
        (vec![f64::NEG_INFINITY], vec![f64::INFINITY], vec!["theta"])
    };
    let name = if cfg.lambda == 1.0 { "planar_2d" } else { "lambda_form" };
    OcpProblem::builder(3, 1, m)
        .name(name)
        .dynamics(move |_x, p, u, _t, out| {
            let v = speed(u);
            out[0] = v * u[0].cos();
            out[1] = v * u[0].sin();
            out[2] = -p[0];
        })
        .dynamics_jacobian(|_x, _p, _u, _t, a, b| {
            a.fill(0.0);
            b.fill(0.0);
            b[(2, 0)] = -1.0;
        })
        .path_constraints(1, move |x, _p, _t, out| {
            out[0] = lambda_constraint([x[0], x[1]], [xo, x[2]], r, lam);
        })
        .constraint_jacobian(move |x, _p, _t, gx, gp| {
            let (dx, dy) = (x[0] - xo, x[1] - x[2]);
            let d2 = (dx * dx + dy * dy).max(1e-24);
            let s = -lam * d2.powf(0.5 * lam - 1.0);
            gx[(0, 0)] = s * dx;
            gx[(0, 1)] = s * dy;
            gx[(0, 2)] = -s * dy;
            gp.fill(0.0);
        })
        .terminal_condition(2, move |x, _t, out| {
            out[0] = x[0] - target[0];
            out[1] = x[1] - target[1];
        })
        .terminal_cost(|_x, t| t)
        .initial_state(vec![c.start[0], c.start[1], c.obstacle_y0])
        .nominal_param(vec![c.nominal_obstacle_speed])
        .control_bounds(lower, upper)
        .final_time_bounds(c.final_time_bounds[0], c.final_time_bounds[1])
        .state_names(["x_a", "y_a", "y_o"])
        .control_names(names)
        .param_names(["v_o"])
        .angle_controls(if speed_control { vec![true, false] } else { vec![true] })
        .build()
}

pub(crate) fn scenario(cfg: &Scenario2DConfig, kind: ScenarioKind) -> Result<Scenario> {
    let problem = build_scenario_2d(cfg)?;
    let obstacle = |t: f64, p: &[f64]| vec![cfg.obstacle_y0 - p[0] * t];
    let mut seeds = Vec::new();
    for h in [0.0, 1.5, -1.5, 3.0, -3.0] {
        seeds.push(arc_guess(
            &problem,
            cfg.start,
            cfg.target,
            h,
            cfg.agent_speed,
            cfg.speed_control,
            &obstacle,
        )?);
    }
    Ok(Scenario {
        kind,
        problem,
        seeds,
        obstacle_x: vec![cfg.obstacle_x],
        safe_distance: vec![cfg.safe_distance],
        track_half_width: None,
        constraint_exponent: Some(cfg.lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_examples() {
        assert_relative_eq!(closed_form_sg_2d([0.0, 0.0], [0.0, 1.0], 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(closed_form_sg_2d([3.0, 1.0], [0.0, 2.0], 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(closed_form_sg_2d([3.0, 2.0], [0.0, 2.0], 4.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            closed_form_sg_2d([1.0, 1.0], [1.0, 1.0], 1.0, 1.0),
            Err(Error::Singularity(_))
        ));
        assert_eq!(closed_form_sg_2d([1.0, 1.0], [1.0, 1.0], 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_matches_perturbed_obstacle_path() {
        // obstacle at y = c - v t; differentiate g in v at fixed agent position
        let (c, v, t, agent, xo) = (2.0, 0.25, 3.0, [4.0, 0.3], 5.0);
        for lam in [0.5, 1.0, 2.0, 4.0] {
            let g = |v: f64| lambda_constraint(agent, [xo, c - v * t], 0.6, lam);
            let h = 1e-6;
            let fd = (g(v + h) - g(v - h)) / (2.0 * h);
            let cf = closed_form_sg_2d(agent, [xo, c - v * t], t, lam).unwrap();
            assert_relative_eq!(fd, cf, max_relative = 1e-7);
        }
    }

    #[test]
    fn default_configuration_dimensions() {
        let p = build_scenario_2d(&Scenario2DConfig::default()).unwrap();
        assert_eq!((p.state_dim(), p.param_dim(), p.constraint_dim()), (3, 1, 1));
        assert_eq!(p.control_dim(), 1);
        assert_eq!(p.initial_state(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn rejects_invalid_fields() {
        for cfg in [
            Scenario2DConfig { safe_distance: 0.0, ..Default::default() },
            Scenario2DConfig { lambda: -1.0, ..Default::default() },
            Scenario2DConfig { nominal_obstacle_speed: -0.1, ..Default::default() },
        ] {
            assert!(build_scenario_2d(&cfg).is_err());
        }
    }

    #[test]
    fn lambda_two_shares_zero_level_set() {
        let r = 0.6;
        for (a, o) in [([0.0, 0.0], [0.0, 0.6]), ([1.0, 2.0], [1.36, 2.48])] {
            assert!(lambda_constraint(a, o, r, 2.0).abs() < 1e-12);
            assert!(lambda_constraint(a, o, r, 1.0).abs() < 1e-12);
        }
    }
}
