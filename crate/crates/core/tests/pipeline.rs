//! End-to-end trends across data generation, weighting, fitting, selection,
//! and inference. Each test aggregates a few seeds so that a single unlucky
//! draw cannot flip the outcome.

use expaft::{
    bootstrap_covariance, calibrate_censoring_bound, centering_tau, derive_seed, generate_dataset,
    plug_in_covariance, two_stage_fit, CovariateSpec, DataGenConfig, ErrorDist, SolverConfig,
    TrueModel, WeightScheme,
};
use expaft::{fit_censored_expectile, ExpectileIndex};
use nalgebra::DVector;

fn l2_error(model: &TrueModel, template: &DataGenConfig, tau: ExpectileIndex, seed: u64) -> f64 {
    let scheme = WeightScheme::default();
    let solver = SolverConfig::default();
    let truth = DVector::from_column_slice(&model.beta);
    let mut cfg = template.clone();
    cfg.seed = seed;
    let (sample, _) = generate_dataset(&cfg, model).unwrap();
    let (_, weights) = scheme.weights(&sample).unwrap();
    let fit = fit_censored_expectile(&sample, tau, &weights, &solver, None).unwrap();
    (&fit.beta - &truth).norm()
}

#[test]
fn uncensored_error_shrinks_with_sample_size() {
    let model = TrueModel::sparse_default(5).unwrap();
    let tau = centering_tau(ErrorDist::Gumbel);
    // standardized covariates, censoring bound far beyond the data range
    let covs = vec![CovariateSpec { mean: 0.0, sd: 1.0 }; 5];
    let mut small_sum = 0.0;
    let mut large_sum = 0.0;
    for s in 0..5u64 {
        for (n, acc) in [(200usize, &mut small_sum), (5000, &mut large_sum)] {
            let template = DataGenConfig {
                n,
                error_dist: ErrorDist::Gumbel,
                covariates: covs.clone(),
                censoring_bound: 1e12,
                intercept: 0.0,
                seed: 0,
            };
            *acc += l2_error(&model, &template, tau, derive_seed(11, s));
        }
    }
    assert!(
        large_sum < small_sum,
        "aggregate error should shrink: n=200 sum {small_sum}, n=5000 sum {large_sum}"
    );
}

#[test]
fn root_n_scaled_error_is_stable_under_censoring() {
    let model = TrueModel::sparse_default(5).unwrap();
    let tau = centering_tau(ErrorDist::Gumbel);
    let base = DataGenConfig::standard(400, 5, ErrorDist::Gumbel, 1.0, 0);
    let bound =
        calibrate_censoring_bound(&model, &base, 0.25, 0.005, derive_seed(12, u64::MAX)).unwrap();

    let mut raw = [0.0f64; 2];
    let mut scaled = [0.0f64; 2];
    for s in 0..5u64 {
        for (k, n) in [400usize, 1600].into_iter().enumerate() {
            let mut template = base.clone();
            template.n = n;
            template.censoring_bound = bound;
            let err = l2_error(&model, &template, tau, derive_seed(13 + k as u64, s));
            raw[k] += err;
            scaled[k] += (n as f64).sqrt() * err;
        }
    }
    assert!(raw[1] < raw[0], "raw error should shrink with n");
    let ratio = scaled[1] / scaled[0];
    assert!(
        (0.5..=2.0).contains(&ratio),
        "sqrt(n)-scaled error moved by {ratio:.3} between n=400 and n=1600"
    );
}

#[test]
fn penalized_pipeline_recovers_support_at_scale() {
    let model = TrueModel::sparse_default(20).unwrap();
    let tau = centering_tau(ErrorDist::Gumbel);
    let scheme = WeightScheme::default();
    let solver = SolverConfig::default();
    let base = DataGenConfig::standard(2000, 20, ErrorDist::Gumbel, 1.0, 0);
    let bound =
        calibrate_censoring_bound(&model, &base, 0.25, 0.005, derive_seed(21, u64::MAX)).unwrap();
    let lambda = (2000.0f64).powf(0.4);
    let expected = model.active_set();

    let mut exact = 0;
    let reps = 10u64;
    for s in 0..reps {
        let mut cfg = base.clone();
        cfg.censoring_bound = bound;
        cfg.seed = derive_seed(22, s);
        let (sample, _) = generate_dataset(&cfg, &model).unwrap();
        let (_, weights) = scheme.weights(&sample).unwrap();
        let fit = two_stage_fit(&sample, tau, &weights, lambda, 2.0, false, &solver).unwrap();
        if fit.selection.active_set == expected {
            exact += 1;
        }
    }
    assert!(
        exact >= 8,
        "exact support recovered in only {exact}/{reps} replications"
    );
}

#[test]
fn bootstrap_and_plug_in_standard_errors_agree() {
    let n = 500;
    let b = (n as f64).ln();
    let model = TrueModel::new(vec![5.0 * b, b]);
    let template = DataGenConfig {
        n,
        error_dist: ErrorDist::Gumbel,
        covariates: vec![
            CovariateSpec { mean: 1.0, sd: 1.0 },
            CovariateSpec {
                mean: 1.0,
                sd: 5.0f64.sqrt(),
            },
        ],
        censoring_bound: 1.0,
        intercept: 0.0,
        seed: 0,
    };
    let tau = centering_tau(ErrorDist::Gumbel);
    let scheme = WeightScheme::default();
    let solver = SolverConfig::default();
    let bound =
        calibrate_censoring_bound(&model, &template, 0.25, 0.005, derive_seed(31, u64::MAX))
            .unwrap();
    let mut cfg = template.clone();
    cfg.censoring_bound = bound;
    cfg.seed = derive_seed(31, 0);
    let (sample, _) = generate_dataset(&cfg, &model).unwrap();
    let (curve, weights) = scheme.weights(&sample).unwrap();
    let fit = fit_censored_expectile(&sample, tau, &weights, &solver, None).unwrap();

    let (_, plug) = plug_in_covariance(&sample, &fit, &curve, &weights).unwrap();
    let boot = bootstrap_covariance(&sample, tau, &scheme, 200, 77, &solver).unwrap();
    for j in 0..2 {
        let rel =
            (boot.standard_errors[j] - plug.standard_errors[j]).abs() / plug.standard_errors[j];
        assert!(
            rel <= 0.30,
            "coordinate {j}: bootstrap SE {:.5} vs plug-in {:.5} (rel {rel:.3})",
            boot.standard_errors[j],
            plug.standard_errors[j]
        );
    }
}
