//! Benchmark problems: a planar agent passing one moving obstacle (with the
//! generalized `lambda` constraint), the car crossing a rail track, and
//! fields of several moving obstacles.

mod car_train;
mod multi_obstacle;
mod planar;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use car_train::{build_car_train, super_gaussian, super_gaussian_dx, CarTrainConfig};
pub use multi_obstacle::{build_multi_obstacle, MultiObstacleConfig, ObstacleSpec};
pub use planar::{build_scenario_2d, closed_form_sg_2d, lambda_constraint, Scenario2DConfig};

use crate::error::{Error, Result};
use crate::ocp::{interpolate_rows, OcpProblem, Trajectory};
use crate::relevance::RelevanceSpec;

/// Scenario file contents. The `scenario` key selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario")]
pub enum ScenarioConfig {
    #[serde(rename = "planar_2d")]
    Planar2d(Scenario2DConfig),
    #[serde(rename = "lambda_form")]
    LambdaForm(Scenario2DConfig),
    #[serde(rename = "car_train")]
    CarTrain(CarTrainConfig),
    #[serde(rename = "multi_obstacle")]
    MultiObstacle(MultiObstacleConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Planar2d,
    LambdaForm,
    CarTrain,
    MultiObstacle,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Planar2d => "planar_2d",
            ScenarioKind::LambdaForm => "lambda_form",
            ScenarioKind::CarTrain => "car_train",
            ScenarioKind::MultiObstacle => "multi_obstacle",
        })
    }
}

impl ScenarioConfig {
    /// Parses a JSON scenario file. Errors carry the line and column
    /// reported by the parser and, for schema errors, the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            scenario: TagKind,
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "snake_case")]
        enum TagKind {
            #[serde(rename = "planar_2d")]
            Planar2d,
            LambdaForm,
            CarTrain,
            MultiObstacle,
        }
        let tag: Tag = serde_json::from_str(text).map_err(|e| config_error(&e, ""))?;
        let cfg = match tag.scenario {
            TagKind::Planar2d => ScenarioConfig::Planar2d(parse_body(text)?),
            TagKind::LambdaForm => ScenarioConfig::LambdaForm(parse_body(text)?),
            TagKind::CarTrain => ScenarioConfig::CarTrain(parse_body(text)?),
            TagKind::MultiObstacle => ScenarioConfig::MultiObstacle(parse_body(text)?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioConfig::Planar2d(_) => ScenarioKind::Planar2d,
            ScenarioConfig::LambdaForm(_) => ScenarioKind::LambdaForm,
            ScenarioConfig::CarTrain(_) => ScenarioKind::CarTrain,
            ScenarioConfig::MultiObstacle(_) => ScenarioKind::MultiObstacle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioConfig::Planar2d(c) | ScenarioConfig::LambdaForm(c) => c.validate(),
            ScenarioConfig::CarTrain(c) => c.validate(),
            ScenarioConfig::MultiObstacle(c) => c.validate(),
        }
    }

    /// Replaces the constraint exponent; only the planar family has one.
    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        match self {
            ScenarioConfig::Planar2d(c) | ScenarioConfig::LambdaForm(c) => {
                c.lambda = lambda;
                c.validate()
            }
            _ => Err(Error::Config(format!("`lambda` does not apply to {}", self.kind()))),
        }
    }

    /// Replaces the super-Gaussian exponent of the car-vs-train window.
    pub fn set_gamma(&mut self, gamma: u32) -> Result<()> {
        match self {
            ScenarioConfig::CarTrain(c) => {
                c.gamma = gamma;
                c.validate()
            }
            _ => Err(Error::Config(format!("`gamma` does not apply to {}", self.kind()))),
        }
    }

    /// Relevance function stored in the file, if any.
    pub fn relevance(&self) -> Option<RelevanceSpec> {
        match self {
            ScenarioConfig::MultiObstacle(c) => c.relevance,
            _ => None,
        }
    }

    /// Penalty weight stored in the file, if the scenario carries one.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ScenarioConfig::MultiObstacle(c) => Some(c.alpha),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        match self {
            ScenarioConfig::Planar2d(c) => planar::scenario(c, ScenarioKind::Planar2d),
            ScenarioConfig::LambdaForm(c) => planar::scenario(c, ScenarioKind::LambdaForm),
            ScenarioConfig::CarTrain(c) => car_train::scenario(c),
            ScenarioConfig::MultiObstacle(c) => multi_obstacle::scenario(c),
        }
    }
}

/// A built problem with its initial guesses and the geometry needed to
/// measure clearances.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub problem: OcpProblem,
    pub seeds: Vec<Trajectory>,
    pub obstacle_x: Vec<f64>,
    pub safe_distance: Vec<f64>,
    /// Car-vs-train only: half width of the track window.
    pub track_half_width: Option<f64>,
    /// Planar family only: exponent of the distance constraint.
    pub constraint_exponent: Option<f64>,
}

impl Scenario {
    pub fn agent_position(&self, x: &[f64]) -> [f64; 2] {
        match self.kind {
            ScenarioKind::CarTrain => [x[0], 0.0],
            _ => [x[0], x[1]],
        }
    }

    pub fn obstacle_positions(&self, x: &[f64]) -> Vec<[f64; 2]> {
        let offset = match self.kind {
            ScenarioKind::CarTrain => 1,
            _ => 2,
        };
        self.obstacle_x
            .iter()
            .enumerate()
            .map(|(i, &ox)| [ox, x[offset + i]])
            .collect()
    }

    /// Agent-obstacle center distances at one state.
    pub fn distances(&self, x: &[f64]) -> Vec<f64> {
        let a = self.agent_position(x);
        self.obstacle_positions(x)
            .iter()
            .map(|o| (a[0] - o[0]).hypot(a[1] - o[1]))
            .collect()
    }

    /// Smallest agent-obstacle distance over the trajectory nodes.
    pub fn min_clearance(&self, traj: &Trajectory) -> f64 {
        traj.states
            .iter()
            .flat_map(|x| self.distances(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest train-car separation while the car is inside the track
    /// window, on a grid `refine` times finer than the trajectory. Returns
    /// `None` when the car never enters the window or the scenario has no
    /// track.
    pub fn crossing_separation(&self, traj: &Trajectory, refine: usize) -> Option<f64> {
        let w = self.track_half_width?;
        let xo = self.obstacle_x[0];
        let fine = refine_grid(&traj.times, refine.max(1));
        fine.iter()
            .map(|&t| interpolate_rows(&traj.times, &traj.states, t))
            .filter(|x| (x[0] - xo).abs() <= w)
            .map(|x| x[1].abs())
            .reduce(f64::min)
    }
}

/// Splits every interval of `times` into `factor` equal parts.
pub fn refine_grid(times: &[f64], factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((times.len() - 1) * factor + 1);
    for w in times.windows(2) {
        for j in 0..factor {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
        }
    }
    out.push(*times.last().unwrap());
    out
}

fn parse_body<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        config_error(e.inner(), if path == "." { "" } else { &path })
    })
}

fn config_error(e: &serde_json::Error, path: &str) -> Error {
    let text = e.to_string();
    let msg = text.rsplit_once(" at line ").map_or(text.as_str(), |(m, _)| m);
    let key = if path.is_empty() { String::new() } else { format!("`{path}`: ") };
    Error::Config(format!("line {}, column {}: {key}{msg}", e.line(), e.column()))
}

pub(crate) fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Planar guess along `start + s (target - start) + h sin(pi s) n`, where `n`
/// is the left normal, traversed at constant parameter rate so that the
/// nominal speed is about `speed`. Obstacle states come from
/// `obstacles(t, p0)`.
pub(crate) fn arc_guess(
    problem: &OcpProblem,
    start: [f64; 2],
    target: [f64; 2],
    h: f64,
    speed: f64,
    speed_control: bool,
    obstacles: &dyn Fn(f64, &[f64]) -> Vec<f64>,
) -> Result<Trajectory> {
    let count = 200;
    let d = [target[0] - start[0], target[1] - start[1]];
    let len = d[0].hypot(d[1]).max(1e-9);
    let nrm = [-d[1] / len, d[0] / len];
    let point = |s: f64| {
        let b = h * (std::f64::consts::PI * s).sin();
        [start[0] + s * d[0] + b * nrm[0], start[1] + s * d[1] + b * nrm[1]]
    };
    let tangent = |s: f64| {
        let b = h * std::f64::consts::PI * (std::f64::consts::PI * s).cos();
        [d[0] + b * nrm[0], d[1] + b * nrm[1]]
    };
    let mut path_len = 0.0;
    for i in 0..count {
        let (a, b) = (point(i as f64 / count as f64), point((i + 1) as f64 / count as f64));
        path_len += (b[0] - a[0]).hypot(b[1] - a[1]);
    }
    let tf = path_len / speed;
    let (lo, hi) = problem.final_time_bounds();
    let tf = tf.clamp(lo, hi);
    let p0 = problem.nominal_param();
    let mut times = Vec::with_capacity(count + 1);
    let mut states = Vec::with_capacity(count + 1);
    let mut controls = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let s = i as f64 / count as f64;
        let t = s * tf;
        let pos = point(s);
        let tan = tangent(s);
        let mut x = vec![pos[0], pos[1]];
        x.extend(obstacles(t, p0));
        let theta = tan[1].atan2(tan[0]);
        let u = if speed_control {
            vec![theta, (tan[0].hypot(tan[1]) / tf).min(speed)]
        } else {
            vec![theta]
        };
        times.push(t);
        states.push(x);
        controls.push(u);
    }
    Trajectory::new(times, states, controls)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_scenario_tag() {
        for (text, kind) in [
            (r#"{"scenario": "planar_2d"}"#, ScenarioKind::Planar2d),
            (r#"{"scenario": "lambda_form", "lambda": 2}"#, ScenarioKind::LambdaForm),
            (r#"{"scenario": "car_train", "gamma": 20}"#, ScenarioKind::CarTrain),
            (
                r#"{"scenario": "multi_obstacle", "obstacles": [{"x": 5, "y0": 1, "direction": -1}]}"#,
                ScenarioKind::MultiObstacle,
            ),
        ] {
            let cfg = ScenarioConfig::from_json(text).unwrap();
            assert_eq!(cfg.kind(), kind);
            cfg.build().unwrap();
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let text = "{\n  \"scenario\": \"planar_2d\",\n  \"obstacle_radius\": 3\n}";
        let err = ScenarioConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("obstacle_radius"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn type_error_names_the_key() {
        let text = "{\"scenario\": \"multi_obstacle\",\n \"obstacles\": [\n  {\"x\": 1, \"y0\": 0, \"direction\": \"up\"}]}";
        let err = ScenarioConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("obstacles[0].direction"), "{err}");
        assert!(err.contains("line 3"), "{err}");
        let err = ScenarioConfig::from_json("{\"safe_distance\": 1}").unwrap_err().to_string();
        assert!(err.contains("scenario"), "{err}");
    }

    #[test]
    fn unknown_scenario_is_rejected() {
        let err = ScenarioConfig::from_json(r#"{"scenario": "maze"}"#).unwrap_err();
        assert!(err.to_string().contains("maze"));
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::CarTrain(CarTrainConfig::default());
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn overrides_apply_only_where_defined() {
        let mut cfg = ScenarioConfig::Planar2d(Scenario2DConfig::default());
        cfg.set_lambda(4.0).unwrap();
        assert!(cfg.set_gamma(20).is_err());
        assert!(cfg.set_lambda(-1.0).is_err());
        let mut car = ScenarioConfig::CarTrain(CarTrainConfig::default());
        assert!(car.set_gamma(7).is_err());
        assert!(car.set_lambda(2.0).is_err());
    }

    #[test]
    fn guesses_match_problem_dimensions() {
        let sc = ScenarioConfig::Planar2d(Scenario2DConfig::default()).build().unwrap();
        for seed in &sc.seeds {
            seed.check_dims(&sc.problem).unwrap();
            let last = seed.states.last().unwrap();
            assert!((last[0] - 10.0).abs() < 1e-9 && last[1].abs() < 1e-9);
        }
        let sc = ScenarioConfig::CarTrain(CarTrainConfig::default()).build().unwrap();
        assert!(sc.seeds.len() >= 2);
        for seed in &sc.seeds {
            seed.check_dims(&sc.problem).unwrap();
        }
    }
}
