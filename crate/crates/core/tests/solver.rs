use rcsplan::scenarios::ScenarioConfig;
use rcsplan::solver::{solve, solve_desensitized, transcribe, CostMode, TranscriptionOptions};
use rcsplan::{Error, OcpProblem, Trajectory};

/// Reach `x = 1` from `x = 0` with `x' = u`, `0 <= u <= 1`: `t_f = 1`.
fn unit_reach() -> OcpProblem {
    OcpProblem::builder(1, 1, 1)
        .dynamics(|_x, p, u, _t, out| out[0] = p[0] * u[0])
        .terminal_condition(1, |x, _t, out| out[0] = x[0] - 1.0)
        .terminal_cost(|_x, t| t)
        .initial_state(vec![0.0])
        .nominal_param(vec![1.0])
        .control_bounds(vec![0.0], vec![1.0])
        .final_time_bounds(0.1, 10.0)
        .build()
        .unwrap()
}

fn straight(tf: f64, nodes: usize) -> Trajectory {
    let times: Vec<f64> = (0..nodes).map(|i| tf * i as f64 / (nodes - 1) as f64).collect();
    let states = times.iter().map(|t| vec![t / tf]).collect();
    Trajectory::new(times, states, vec![vec![1.0 / tf]; nodes]).unwrap()
}

#[test]
fn minimum_time_on_a_line() {
    let problem = unit_reach();
    let opts = TranscriptionOptions {
        num_nodes: 15,
        cost_mode: CostMode::Nominal,
        ..TranscriptionOptions::default()
    };
    let nlp = transcribe(&problem, &opts).unwrap();
    let sol = solve(&nlp, &straight(4.0, 15)).unwrap();
    assert!(sol.converged, "{}", sol.message);
    assert!((sol.trajectory.final_time - 1.0).abs() < 1e-6);
    assert!(sol.trajectory.controls.iter().all(|u| (u[0] - 1.0).abs() < 1e-6));
}

#[test]
fn pack_unpack_round_trip() {
    let sc = ScenarioConfig::from_json(r#"{"scenario": "car_train"}"#).unwrap().build().unwrap();
    let opts = TranscriptionOptions::default().with_alpha(1.0).unwrap();
    let nlp = transcribe(&sc.problem, &opts).unwrap();
    let w = nlp.pack(&sc.seeds[0]).unwrap();
    assert_eq!(w.len(), nlp.dim());
    let traj = nlp.unpack(&w).unwrap();
    assert_eq!(nlp.pack(&traj).unwrap(), w);
}

#[test]
fn grazing_minimum_time_plan() {
    let sc = ScenarioConfig::from_json(r#"{"scenario": "planar_2d", "obstacle_y0": 1.5}"#)
        .unwrap()
        .build()
        .unwrap();
    let sol = solve_desensitized(&sc.problem, &TranscriptionOptions::default(), &sc.seeds).unwrap();
    assert!(sol.converged);
    assert!((sc.min_clearance(&sol.trajectory) - 0.6).abs() < 1e-3);
    // a straight run at unit speed takes 10; the detour costs a little more
    assert!(sol.trajectory.final_time > 10.0 && sol.trajectory.final_time < 10.2);
    assert_eq!(sol.objective_breakdown.sensitivity, 0.0);
}

#[test]
fn penalty_raises_nominal_cost_and_lowers_sensitivity() {
    let sc = ScenarioConfig::from_json(r#"{"scenario": "planar_2d", "obstacle_y0": 1.5}"#)
        .unwrap()
        .build()
        .unwrap();
    let run = |alpha: f64| {
        let opts = TranscriptionOptions::default().with_alpha(alpha).unwrap();
        solve_desensitized(&sc.problem, &opts, &sc.seeds).unwrap()
    };
    let (low, high) = (run(0.1), run(1.0));
    assert!(high.objective_breakdown.nominal >= low.objective_breakdown.nominal - 1e-8);
    // the breakdown carries the weight; compare the unweighted integrals
    let unweighted = |s: &rcsplan::NlpSolution, alpha: f64| s.objective_breakdown.sensitivity / alpha;
    assert!(unweighted(&high, 1.0) <= unweighted(&low, 0.1) + 1e-8);
}

#[test]
fn unreachable_target_reports_all_seeds() {
    // the final-time cap makes the target unreachable at unit speed
    let problem = unit_reach().with_final_time_bounds(0.1, 0.5).unwrap();
    let opts = TranscriptionOptions {
        num_nodes: 10,
        cost_mode: CostMode::Nominal,
        ..TranscriptionOptions::default()
    };
    let seeds = [straight(0.5, 10), straight(0.3, 10)];
    match solve_desensitized(&problem, &opts, &seeds) {
        Err(Error::AllSeedsFailed { attempts, reasons }) => {
            assert_eq!(attempts, 2);
            assert_eq!(reasons.len(), 2);
        }
        other => panic!("expected failure, got {other:?}"),
    }
}
