use lmm_es_core::{
    build_v, estimate_ratios, gls_fit, ols_fit, CovarianceStructure, Error, EstimateOptions,
    Factor, Optimizer, RemlProblem,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Restricted profile criterion from a dense V.
fn dense_criterion(ratios: &[f64], y: &DVector<f64>, x: &DMatrix<f64>, groups: &[Factor]) -> f64 {
    let n = y.len();
    let v = build_v(
        &CovarianceStructure::new(ratios.to_vec(), groups.to_vec()).unwrap(),
        n,
    )
    .unwrap();
    let chol = v.clone().cholesky().unwrap();
    let ln_det_v: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let vinv_x = chol.solve(x);
    let xtvx = x.tr_mul(&vinv_x);
    let ln_det_xtvx = 2.0
        * xtvx
            .clone()
            .cholesky()
            .unwrap()
            .l()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let fit = gls_fit(y, x, &v).unwrap();
    let nu = (n - x.ncols()) as f64;
    ln_det_v + ln_det_xtvx + nu * fit.residual_quadform.ln()
}

struct Instance {
    y: DVector<f64>,
    x: DMatrix<f64>,
    group: Factor,
}

fn simulate(n: usize, levels: usize, k: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes: Vec<usize> = (0..n).map(|i| i % levels).collect();
    let u: Vec<f64> = (0..levels)
        .map(|_| k.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let x1 = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
        let x2: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = x1;
        x[(i, 2)] = x2;
        y[i] = 1.0 + 0.5 * x1 - 0.3 * x2 + u[codes[i]] + rng.sample::<f64, _>(StandardNormal);
    }
    Instance {
        y,
        x,
        group: Factor::from_codes(codes, levels).unwrap(),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_matches_dense_formula_on_grid() {
    let inst = simulate(60, 6, 1.0, 1);
    let groups = [inst.group.clone()];
    let problem = RemlProblem::new(&inst.y, &inst.x, &groups).unwrap();
    for i in 0..50 {
        let k = 10f64.powf(-3.0 + 5.0 * i as f64 / 49.0);
        let fast = problem.criterion(&[k]).unwrap();
        let dense = dense_criterion(&[k], &inst.y, &inst.x, &groups);
        assert!(rel_close(fast, dense, 1e-9), "k={k}: {fast} vs {dense}");
    }
}

#[test]
fn criterion_at_zero_is_ols_reml() {
    let inst = simulate(40, 5, 0.5, 2);
    let groups = [inst.group.clone()];
    let ols = ols_fit(&inst.y, &inst.x).unwrap();
    let xtx_logdet: f64 = 2.0
        * inst
            .x
            .tr_mul(&inst.x)
            .cholesky()
            .unwrap()
            .l()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let expected = xtx_logdet + 37.0 * ols.residual_quadform.ln();
    let got = RemlProblem::new(&inst.y, &inst.x, &groups)
        .unwrap()
        .criterion(&[0.0])
        .unwrap();
    assert!(rel_close(got, expected, 1e-10), "{got} vs {expected}");
}

#[test]
fn two_factor_criterion_matches_dense() {
    let inst = simulate(48, 4, 0.8, 3);
    let second = Factor::from_codes((0..48).map(|i| (i / 4) % 3).collect(), 3).unwrap();
    let groups = [inst.group.clone(), second];
    let problem = RemlProblem::new(&inst.y, &inst.x, &groups).unwrap();
    for ratios in [[0.0, 0.0], [0.3, 2.0], [5.0, 0.01], [1.0, 1.0]] {
        let fast = problem.criterion(&ratios).unwrap();
        let dense = dense_criterion(&ratios, &inst.y, &inst.x, &groups);
        assert!(
            rel_close(fast, dense, 1e-9),
            "{ratios:?}: {fast} vs {dense}"
        );
    }
}

#[test]
fn toy_problem_criterion_shape() {
    // n = 20, four groups, between-group variance far above the noise
    let codes: Vec<usize> = (0..20).map(|i| i / 5).collect();
    let offsets = [-3.0, 1.0, 2.5, -0.5];
    let noise = [
        0.3, -0.2, 0.1, 0.0, -0.4, 0.2, 0.5, -0.1, -0.3, 0.1, 0.0, 0.4, -0.2, 0.3, -0.5, 0.1, -0.1,
        0.2, 0.3, -0.2,
    ];
    let y = DVector::from_iterator(20, (0..20).map(|i| 10.0 + offsets[codes[i]] + noise[i]));
    let x = DMatrix::from_element(20, 1, 1.0);
    let groups = [Factor::from_codes(codes, 4).unwrap()];
    let problem = RemlProblem::new(&y, &x, &groups).unwrap();
    let c0 = problem.criterion(&[0.0]).unwrap();
    let c1 = problem.criterion(&[1.0]).unwrap();
    let c10 = problem.criterion(&[10.0]).unwrap();
    let c_far = problem.criterion(&[1e6]).unwrap();
    assert!(c1 < c0, "{c1} !< {c0}");
    assert!(c10 < c1);
    assert!(c_far > c10);
}

#[test]
fn estimate_minimizes_dense_criterion() {
    let inst = simulate(90, 9, 1.5, 4);
    let groups = [inst.group.clone()];
    let est = estimate_ratios(&inst.y, &inst.x, &groups, &EstimateOptions::default()).unwrap();
    let k = est.ratios[0];
    assert!(k > 0.0);
    let at = dense_criterion(&[k], &inst.y, &inst.x, &groups);
    for factor in [0.9, 0.99, 1.01, 1.1] {
        assert!(dense_criterion(&[k * factor], &inst.y, &inst.x, &groups) >= at - 1e-9);
    }
    let problem = RemlProblem::new(&inst.y, &inst.x, &groups).unwrap();
    let best = problem.criterion(&[k]).unwrap();
    for i in 0..50 {
        let kk = (4.0 * k + 1.0) * i as f64 / 49.0;
        assert!(
            problem.criterion(&[kk]).unwrap() >= best - 1e-10,
            "grid point {kk}"
        );
    }
    let v = build_v(
        &CovarianceStructure::single(k, inst.group.clone()).unwrap(),
        90,
    )
    .unwrap();
    let fit = gls_fit(&inst.y, &inst.x, &v).unwrap();
    assert!((est.sigma2_hat - fit.sigma2_hat).abs() <= 1e-8 * fit.sigma2_hat);
    assert!((est.component_variances[0] - k * est.sigma2_hat).abs() < 1e-12);
}

#[test]
fn argmin_is_invariant_to_response_scale_and_shift() {
    let inst = simulate(80, 8, 1.0, 5);
    let groups = [inst.group.clone()];
    let base = estimate_ratios(&inst.y, &inst.x, &groups, &EstimateOptions::default()).unwrap();
    let scaled = inst.y.map(|v| 7.5 * v);
    let est = estimate_ratios(&scaled, &inst.x, &groups, &EstimateOptions::default()).unwrap();
    assert!((est.ratios[0] - base.ratios[0]).abs() < 1e-6 * base.ratios[0].max(1.0));
    assert!((est.sigma2_hat / base.sigma2_hat - 56.25).abs() < 1e-5);

    let shifted = inst.y.map(|v| v + 1e3);
    let est = estimate_ratios(&shifted, &inst.x, &groups, &EstimateOptions::default()).unwrap();
    assert!((est.ratios[0] - base.ratios[0]).abs() < 1e-6);
}

#[test]
fn scalar_and_simplex_agree() {
    for seed in 10..14 {
        let inst = simulate(100, 10, 0.7, seed);
        let groups = [inst.group.clone()];
        let scalar = EstimateOptions {
            optimizer: Optimizer::Scalar,
            ..Default::default()
        };
        let simplex = EstimateOptions {
            optimizer: Optimizer::Simplex,
            ..Default::default()
        };
        let a = estimate_ratios(&inst.y, &inst.x, &groups, &scalar).unwrap();
        let b = estimate_ratios(&inst.y, &inst.x, &groups, &simplex).unwrap();
        assert!(
            (a.ratios[0] - b.ratios[0]).abs() < 1e-6 * a.ratios[0].max(1.0),
            "seed {seed}: {} vs {}",
            a.ratios[0],
            b.ratios[0]
        );
        assert!((a.criterion_value - b.criterion_value).abs() < 1e-9);
    }
}

#[test]
fn no_group_signal_lands_on_boundary() {
    // group means identical by construction: the criterion rises with k
    let codes: Vec<usize> = (0..24).map(|i| i % 4).collect();
    let base = [1.0, -1.0, 2.0, -2.0, 0.5, -0.5];
    let y = DVector::from_iterator(24, (0..24).map(|i| base[i / 4]));
    let x = DMatrix::from_element(24, 1, 1.0);
    let groups = [Factor::from_codes(codes, 4).unwrap()];
    let est = estimate_ratios(&y, &x, &groups, &EstimateOptions::default()).unwrap();
    assert_eq!(est.ratios, vec![0.0]);
    let simplex = EstimateOptions {
        optimizer: Optimizer::Simplex,
        ..Default::default()
    };
    let est = estimate_ratios(&y, &x, &groups, &simplex).unwrap();
    assert_eq!(est.ratios, vec![0.0]);
}

#[test]
fn degenerate_response_is_rejected() {
    let y = DVector::from_element(12, 3.0);
    let x = DMatrix::from_element(12, 1, 1.0);
    let groups = [Factor::from_codes((0..12).map(|i| i % 3).collect(), 3).unwrap()];
    let err = RemlProblem::new(&y, &x, &groups).unwrap_err();
    assert!(matches!(err, Error::DegenerateResponse));
}

#[test]
fn iteration_cap_reports_convergence_failure() {
    let inst = simulate(60, 6, 1.0, 6);
    let groups = [inst.group.clone()];
    let opts = EstimateOptions {
        optimizer: Optimizer::Scalar,
        scalar_max_iter: 1,
        scalar_xtol: 1e-14,
        ..Default::default()
    };
    match estimate_ratios(&inst.y, &inst.x, &groups, &opts).unwrap_err() {
        Error::ConvergenceFailure { best, .. } => assert_eq!(best.len(), 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn small_instance_generated_at_unit_ratio() {
    let codes: Vec<usize> = (0..20).map(|i| i % 4).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let u: Vec<f64> = (0..4)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = DVector::from_fn(20, |i, _| {
        5.0 + u[codes[i]] + rng.sample::<f64, _>(StandardNormal)
    });
    let x = DMatrix::from_element(20, 1, 1.0);
    let groups = [Factor::from_codes(codes, 4).unwrap()];
    let crit = |k: f64| dense_criterion(&[k], &y, &x, &groups);
    assert!(crit(1.0) < crit(0.0), "{} vs {}", crit(1.0), crit(0.0));
    assert!(crit(1.0) < crit(10.0), "{} vs {}", crit(1.0), crit(10.0));
    let fast = RemlProblem::new(&y, &x, &groups).unwrap();
    for k in [0.0, 1.0, 10.0] {
        assert!(rel_close(fast.criterion(&[k]).unwrap(), crit(k), 1e-10));
    }
}
