use gridmin::directional::{LocalModel, LocalOptions};
use gridmin::fixtures;
use gridmin::objective::GridModel;
use gridmin::optimizer::{
    init_subgradient, running_min, steepest_descent, steepest_direction, two_step, DirectionCase, OptimizerConfig, Termination,
};
use nalgebra::{dvector, DVector};

fn grid_minimum(model: &GridModel, r: f64) -> (f64, f64) {
    let poly = model.polytope();
    (0..=(poly.b2()[0] * 1e3).round() as usize)
        .map(|i| dvector![i as f64 * 1e-3])
        .filter(|p| poly.violation(p).unwrap() <= 1e-9)
        .map(|p| (p[0], model.evaluate(&p, r).unwrap().f))
        .fold((f64::NAN, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best })
}

#[test]
fn toy_direction_points_toward_the_grid_minimizer() {
    let model = GridModel::new(fixtures::toy_path_skewed()).unwrap();
    let cfg = OptimizerConfig { r: 1.0, ..Default::default() };
    let (p_star, _) = grid_minimum(&model, cfg.r);
    for start in [0.2, 0.6, 1.3] {
        let p = dvector![start];
        if model.polytope().violation(&p).unwrap() > 0.0 || (start - p_star).abs() < 1e-2 {
            continue;
        }
        let local = LocalModel::new(&model, &p, cfg.r, &LocalOptions::default()).unwrap();
        let dir = steepest_direction(&model, &local, &cfg).unwrap();
        assert_eq!(dir.case, DirectionCase::Descent);
        assert_eq!(dir.v[0].signum(), (p_star - start).signum(), "start {start}");
    }
}

#[test]
fn descent_on_toy_reaches_grid_minimum() {
    for net in [fixtures::toy_path(), fixtures::toy_path_skewed()] {
        let model = GridModel::new(net).unwrap();
        let cfg = OptimizerConfig { r: 1.0, ..Default::default() };
        let (_, f_star) = grid_minimum(&model, cfg.r);
        for start in [0.1, 0.75, 1.4] {
            let p0 = dvector![start];
            if model.polytope().violation(&p0).unwrap() > 1e-9 {
                continue;
            }
            let out = steepest_descent(&model, &p0, &cfg).unwrap();
            // the grid can miss a kink minimizer by half a step
            assert!(out.f >= f_star - 1e-3);
            assert!(out.f - f_star <= 1e-3, "from {start}: {} vs {f_star}", out.f);
        }
    }
}

#[test]
fn convex_case_initialization_matches_grid() {
    // without noise the objective is a max of convex terms
    let model = GridModel::new(fixtures::toy_path_skewed().with_noise_scaled(0.0)).unwrap();
    let cfg = OptimizerConfig { r: 1.0, init_step_scale: 1.0, ..Default::default() };
    let (_, f_star) = grid_minimum(&model, cfg.r);
    let out = init_subgradient(&model, &dvector![0.1], &cfg).unwrap();
    assert!((out.f - f_star).abs() <= 1e-3, "{} vs {f_star}", out.f);
}

#[test]
fn restart_at_a_minimizer_stops_at_once() {
    let model = GridModel::new(fixtures::two_ring()).unwrap();
    let cfg = OptimizerConfig { r: 3.0, ..Default::default() };
    let first = two_step(&model, &dvector![19.0, 19.0, 19.0], &cfg).unwrap();
    let again = steepest_descent(&model, &first.p, &cfg).unwrap();
    assert!(again.trace.rows.len() <= 2);
    assert!(first.f - again.f <= cfg.eps_stop);
    assert!(again.termination.is_converged());
}

#[test]
fn initialization_returns_best_visited_point() {
    let model = GridModel::new(fixtures::two_ring()).unwrap();
    let cfg = OptimizerConfig { r: 1.0, init_iters: 40, ..Default::default() };
    let out = init_subgradient(&model, &dvector![23.0, 19.0, 24.0], &cfg).unwrap();
    let fs: Vec<f64> = out.trace.rows.iter().map(|r| r.f).collect();
    let best = running_min(fs.iter().copied()).pop().unwrap();
    assert_eq!(out.f, best);
    assert_eq!(out.termination, Termination::Completed);
    let recorded: Vec<f64> = out.trace.rows.iter().map(|r| r.f_min.unwrap()).collect();
    assert!(recorded.windows(2).all(|w| w[1] <= w[0]));
    let at_best = model.evaluate(&out.p, cfg.r).unwrap().f;
    assert_eq!(at_best, out.f);
}

#[test]
fn infeasible_start_is_refused() {
    let model = GridModel::new(fixtures::two_ring()).unwrap();
    let cfg = OptimizerConfig::default();
    assert!(steepest_descent(&model, &DVector::from_element(3, 40.0), &cfg).is_err());
    assert!(init_subgradient(&model, &DVector::from_element(3, 1.0), &cfg).is_err());
}

#[test]
fn three_probe_vote_runs() {
    let model = GridModel::new(fixtures::toy_path()).unwrap();
    let cfg = OptimizerConfig { r: 1.0, xi_vote: true, ..Default::default() };
    let out = two_step(&model, &dvector![0.3], &cfg).unwrap();
    assert!(out.termination.is_converged());
}
