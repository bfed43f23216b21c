use rcsplan::evaluation::{sample_perturbation, simulate_on_grid};
use rcsplan::scenarios::{refine_grid, ScenarioConfig};
use rcsplan::solver::{solve_desensitized, TranscriptionOptions};
use rcsplan::{collision_probability, ControlSignal, McConfig, OcpProblem, Trajectory};
use statrs::distribution::{ContinuousCDF, Normal};

/// `x' = v` from `x = 0` over `[0, 1]` with nominal `v = 0`; the plan
/// collides exactly when the sampled speed exceeds `threshold`.
fn drift_past(threshold: f64) -> (OcpProblem, Trajectory) {
    let problem = OcpProblem::builder(1, 1, 1)
        .dynamics(|_x, p, _u, _t, out| out[0] = p[0])
        .path_constraints(1, move |x, _p, _t, out| out[0] = x[0] - threshold)
        .initial_state(vec![0.0])
        .nominal_param(vec![0.0])
        .final_time_bounds(1.0, 1.0)
        .build()
        .unwrap();
    let times: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
    let plan = Trajectory::new(times, vec![vec![0.0]; 11], vec![vec![0.0]; 11]).unwrap();
    (problem, plan)
}

#[test]
fn estimate_matches_normal_tail() {
    let sigma = 0.1f64.sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    for (threshold, seed) in [(0.1, 1), (0.3, 2), (0.6, 3)] {
        let (problem, plan) = drift_past(threshold);
        let mc = McConfig {
            num_samples: 4000,
            perturbation_std: sigma,
            rng_seed: seed,
            ..McConfig::default()
        };
        let est = collision_probability(&problem, &plan, &mc).unwrap();
        let exact = 1.0 - normal.cdf(threshold);
        assert!(
            est.ci_low <= exact && exact <= est.ci_high,
            "threshold {threshold}: exact {exact:.4} outside [{:.4}, {:.4}]",
            est.ci_low,
            est.ci_high
        );
        assert_eq!(est.n_samples, 4000);
        assert_eq!(est.diverged, 0);
    }
}

#[test]
fn zero_spread_never_collides_with_a_clear_plan() {
    let (problem, plan) = drift_past(0.2);
    let mc = McConfig {
        num_samples: 50,
        perturbation_std: 0.0,
        ..McConfig::default()
    };
    let est = collision_probability(&problem, &plan, &mc).unwrap();
    assert_eq!(est.collisions, 0);
    assert_eq!(est.p_c, 0.0);
}

#[test]
fn estimate_is_reproducible() {
    let (problem, plan) = drift_past(0.3);
    let mc = McConfig {
        num_samples: 500,
        rng_seed: 42,
        ..McConfig::default()
    };
    let a = collision_probability(&problem, &plan, &mc).unwrap();
    let b = collision_probability(&problem, &plan, &mc).unwrap();
    assert_eq!(a.collisions, b.collisions);
    assert_eq!(a.p_c.to_bits(), b.p_c.to_bits());
}

#[test]
fn doubling_the_grid_keeps_verdicts() {
    let cfg = ScenarioConfig::from_json(r#"{"scenario": "planar_2d", "obstacle_y0": 1.5}"#).unwrap();
    let sc = cfg.build().unwrap();
    let sol = solve_desensitized(&sc.problem, &TranscriptionOptions::default(), &sc.seeds).unwrap();
    let plan = &sol.trajectory;
    let control = ControlSignal::from_trajectory(plan);
    let mc = McConfig::default();
    let coarse = refine_grid(&plan.times, mc.refinement);
    let fine = refine_grid(&plan.times, 2 * mc.refinement);
    let p0 = sc.problem.nominal_param();
    let mut collisions = 0;
    for i in 0..300 {
        let dp = sample_perturbation(mc.rng_seed, i, p0.len(), mc.perturbation_std);
        let p: Vec<f64> = p0.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let a = simulate_on_grid(&sc.problem, &control, &p, &coarse, 0.0).unwrap();
        let b = simulate_on_grid(&sc.problem, &control, &p, &fine, 0.0).unwrap();
        assert_eq!(a.collided, b.collided, "sample {i}");
        collisions += a.collided as usize;
    }
    // the grazing plan should collide for a sizable share of samples
    assert!(collisions > 30 && collisions < 270, "{collisions}");
}
