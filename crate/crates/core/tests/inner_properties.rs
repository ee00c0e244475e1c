use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttslab::inner::{
    danskin_residual, lambda_lipschitz_estimate, solve_lambda, solve_lambda_from, InitStrategy, InnerMethod,
    InnerSolveConfig,
};
use ttslab::model::{build_model, LossModel, ModelSpec};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Smallest eigenvalue of an SPD matrix via power iteration on its inverse.
fn sigma_min(a: &DMatrix<f64>) -> f64 {
    let inv = a.clone().try_inverse().unwrap();
    let mut q = DVector::from_element(a.nrows(), 1.0).normalize();
    let mut lam = 0.0;
    for _ in 0..500 {
        let z = &inv * &q;
        lam = z.norm();
        q = z / lam;
    }
    1.0 / lam
}

fn quadratic() -> (Box<dyn LossModel>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 0.5]);
    let spec = ModelSpec::new("quadratic")
        .matrix("a", &[&[3.0, 1.0], &[1.0, 0.5]])
        .matrix("b", &[&[1.0, 2.0], &[-1.0, 0.5]])
        .scalar("c", 1.0);
    (build_model(&spec).unwrap(), a)
}

#[test]
fn quadratic_numeric_lambda_matches_oracle() {
    let (m, a) = quadratic();
    let bound = |tol: f64| tol / sigma_min(&a);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 0.1;
    for method in [InnerMethod::Newton, InnerMethod::GradientDescent] {
        let cfg = InnerSolveConfig {
            method,
            tol: 1e-9,
            max_iters: 100_000,
            ..Default::default()
        };
        for _ in 0..100 {
            let y = DVector::from_fn(2, |_, _| rng.random_range(-20.0..20.0));
            let sol = solve_lambda(m.as_ref(), &y, eps, &cfg).unwrap();
            assert!(sol.converged, "{method:?}");
            let oracle = m.oracle_lambda(&(&y * eps)).unwrap();
            assert!((sol.x - oracle).norm() <= bound(cfg.tol), "{method:?}");
        }
    }
}

#[test]
fn random_restarts_find_the_lower_fast_minimum() {
    let m = build_model(
        &ModelSpec::new("multi-min-fast")
            .scalar("coupling", 0.3)
            .scalar("dim_x", 1.0),
    )
    .unwrap();
    let cfg = InnerSolveConfig {
        init: InitStrategy::RandomRestarts { k: 8, radius: 3.0 },
        ..Default::default()
    };
    let eps = 0.1;
    for i in 0..50 {
        let y = v(&[-5.0 + 10.0 * i as f64 / 49.0]);
        let u = &y * eps;
        let sol = solve_lambda(m.as_ref(), &y, eps, &cfg).unwrap();
        let grid_best = (0..=6000)
            .map(|k| -3.0 + k as f64 * 1e-3)
            .min_by(|p, q| m.eval(&v(&[*p]), &u).partial_cmp(&m.eval(&v(&[*q]), &u)).unwrap())
            .unwrap();
        assert!(
            (sol.x[0] - grid_best).abs() <= 1e-3,
            "y = {}: {} vs {grid_best}",
            y[0],
            sol.x[0]
        );
    }
}

#[test]
fn danskin_identity_on_quadratic() {
    let (m, _) = quadratic();
    let cfg = InnerSolveConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let y = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let r = danskin_residual(m.as_ref(), &y, 0.2, &cfg).unwrap();
        assert!(r <= 1e-6, "{r}");
    }
}

#[test]
fn danskin_identity_on_smooth_pinched_valley() {
    let m = build_model(
        &ModelSpec::new("pinched-valley")
            .scalar("dim_x", 2.0)
            .scalar("kappa", 5.0)
            .scalar("kappa_quad", 1.0)
            .scalar("bend_height", 1.0)
            .scalar("bend_width", 0.5)
            .scalar("coupling", 0.5),
    )
    .unwrap();
    let cfg = InnerSolveConfig {
        tol: 1e-9,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let y = v(&[rng.random_range(-10.0..10.0)]);
        let r = danskin_residual(m.as_ref(), &y, 0.1, &cfg).unwrap();
        assert!(r <= 1e-3, "{r}");
    }
}

#[test]
fn lipschitz_identity_coupling_is_epsilon() {
    let spec = ModelSpec::new("quadratic")
        .scalar("dim_x", 2.0)
        .scalar("dim_y", 2.0)
        .scalar("a", 1.0)
        .scalar("b", 1.0);
    let m = build_model(&spec).unwrap();
    let ys = [v(&[0.0, 0.0]), v(&[1.0, 2.0]), v(&[-3.0, 0.5])];
    let est = lambda_lipschitz_estimate(m.as_ref(), &ys, 0.05, &InnerSolveConfig::default()).unwrap();
    assert!((est.pairwise - 0.05).abs() < 1e-9);
    assert!((est.hessian.unwrap() - 0.05).abs() < 1e-12);
}

#[test]
fn lipschitz_hessian_formula_agrees_with_pairwise() {
    let spec = ModelSpec::new("quadratic")
        .matrix("a", &[&[1.0, 0.0], &[0.0, 4.0]])
        .matrix("b", &[&[1.0, 0.0], &[0.0, 1.0]]);
    let m = build_model(&spec).unwrap();
    let eps = 0.1;
    let ys = [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[2.0, -1.0])];
    let est = lambda_lipschitz_estimate(m.as_ref(), &ys, eps, &InnerSolveConfig::default()).unwrap();
    let h = est.hessian.unwrap();
    assert!((h - eps).abs() < 1e-12, "{h}");
    assert!((est.pairwise - h).abs() < 1e-8, "{} vs {h}", est.pairwise);
}

#[test]
fn warm_starts_keep_iteration_counts_bounded() {
    let m = build_model(
        &ModelSpec::new("pinched-valley")
            .scalar("dim_x", 2.0)
            .scalar("kappa", 3.0)
            .scalar("kappa_quad", 0.5)
            .scalar("bend_height", 2.0)
            .scalar("bend_width", 0.3)
            .scalar("coupling", 1.0),
    )
    .unwrap();
    let eps = 0.1;
    let cold = InnerSolveConfig {
        method: InnerMethod::GradientDescent,
        tol: 1e-9,
        max_iters: 100_000,
        ..Default::default()
    };
    let warm = InnerSolveConfig {
        init: InitStrategy::WarmStart,
        ..cold
    };
    let path: Vec<DVector<f64>> = (0..400).map(|k| v(&[-10.0 + 0.05 * k as f64])).collect();
    let mut prev = solve_lambda(m.as_ref(), &path[0], eps, &cold).unwrap().x;
    let mut iters = Vec::new();
    for y in &path[1..] {
        let sol = solve_lambda_from(m.as_ref(), y, eps, &warm, Some(&prev)).unwrap();
        assert!(sol.converged);
        iters.push(sol.iterations);
        prev = sol.x;
    }
    let mut sorted = iters.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2].max(1);
    assert!(
        *sorted.last().unwrap() <= 10 * median,
        "max {} median {median}",
        sorted.last().unwrap()
    );
}
