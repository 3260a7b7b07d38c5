//! Replicated studies over the full estimation pipeline.
//!
//! Each replication draws a fresh dataset from a derived seed, builds the
//! censoring weights, and runs every requested method on the same data.
//! Replications execute in parallel but are aggregated in index order, so a
//! report depends only on the configuration, never on scheduling.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alasso::two_stage_fit;
use crate::error::{Error, Result};
use crate::km::WeightScheme;
use crate::loss::ExpectileIndex;
use crate::sample::SurvivalSample;
use crate::sim::datagen::{
    calibrate_censoring_bound, centering_tau, derive_seed, generate_dataset, DataGenConfig,
    ErrorDist, TrueModel,
};
use crate::solver::{fit_censored_expectile, SolverConfig};

/// Reserved tag for the calibration seed; replication tags count up from 0.
const CALIBRATION_TAG: u64 = u64::MAX;

/// Estimation method run on each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fit at the error-centering expectile index.
    Expectile,
    /// Least squares, the symmetric index 1/2 in the same pipeline.
    LeastSquares,
}

impl Method {
    pub fn tau(self, dist: ErrorDist) -> ExpectileIndex {
        match self {
            Method::Expectile => centering_tau(dist),
            Method::LeastSquares => ExpectileIndex::symmetric(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Expectile => "expectile",
            Method::LeastSquares => "ls",
        }
    }
}

/// Rule mapping the sample size to the penalty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    /// `sqrt(n)`
    SqrtN,
    /// `n^0.4`
    NPow04,
    /// A fixed level regardless of `n`.
    Fixed(f64),
}

impl LambdaRule {
    pub fn lambda(self, n: usize) -> f64 {
        match self {
            LambdaRule::SqrtN => (n as f64).sqrt(),
            LambdaRule::NPow04 => (n as f64).powf(0.4),
            LambdaRule::Fixed(v) => v,
        }
    }

    pub fn label(self) -> String {
        match self {
            LambdaRule::SqrtN => "sqrt-n".to_string(),
            LambdaRule::NPow04 => "n-0.4".to_string(),
            LambdaRule::Fixed(v) => format!("fixed:{v}"),
        }
    }
}

/// Whether the fitted design gets an intercept column prepended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterceptMode {
    Without,
    With,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    /// Run the selection stage; otherwise report the unpenalized fit.
    pub penalized: bool,
    pub lambda_rule: LambdaRule,
    pub gamma: f64,
    pub intercept_mode: InterceptMode,
    pub reps: usize,
    pub target_censoring: f64,
    /// Calibration tolerance on the censoring rate.
    pub rate_tol: f64,
    pub seed: u64,
    pub scheme: WeightScheme,
    pub solver: SolverConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Expectile],
            penalized: true,
            lambda_rule: LambdaRule::NPow04,
            gamma: 2.0,
            intercept_mode: InterceptMode::Without,
            reps: 100,
            target_censoring: 0.25,
            rate_tol: 0.005,
            seed: 0,
            scheme: WeightScheme::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Aggregates for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub tau: f64,
    /// Mean over replications of the L2 error of the fitted coefficients.
    pub l2_error: f64,
    /// Standard deviation over replications of that L2 error.
    pub l2_sd: f64,
    /// Pooled standard deviation of the componentwise errors on the truly
    /// nonzero slopes.
    pub sd_active: f64,
    /// Standard deviation of each truly nonzero slope's estimate, in
    /// active-set order.
    pub sd_by_coord: Vec<f64>,
    /// Mean percentage of truly zero slopes estimated as exactly zero.
    pub pct_true_zeros: Option<f64>,
    /// Mean percentage of truly nonzero slopes estimated as exactly zero.
    pub pct_false_zeros: Option<f64>,
    /// Fraction of replications recovering the support exactly.
    pub exact_support_rate: Option<f64>,
    pub mean_censored_fraction: f64,
    /// Replications dropped after a failure in any pipeline stage.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub seed: u64,
    pub error_dist: ErrorDist,
    pub target_censoring: f64,
    /// Calibrated upper endpoint of the censoring law.
    pub censoring_bound: f64,
    pub penalized: bool,
    pub lambda_rule: LambdaRule,
    pub lambda: f64,
    pub gamma: f64,
    pub intercept_mode: InterceptMode,
    pub methods: Vec<MethodReport>,
}

struct MethodOutcome {
    l2: f64,
    active_errors: Vec<f64>,
    true_zero_pct: Option<f64>,
    false_zero_pct: Option<f64>,
    exact_support: Option<bool>,
    censored_fraction: f64,
}

fn validate_study(model: &TrueModel, template: &DataGenConfig, study: &StudyConfig) -> Result<()> {
    if study.methods.is_empty() {
        return Err(Error::InvalidParameter {
            name: "methods",
            value: 0.0,
            constraint: "at least one method",
        });
    }
    if study.reps == 0 {
        return Err(Error::InvalidParameter {
            name: "reps",
            value: 0.0,
            constraint: "at least one replication",
        });
    }
    if !(study.gamma > 0.0 && study.gamma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: study.gamma,
            constraint: "finite and positive",
        });
    }
    if let LambdaRule::Fixed(v) = study.lambda_rule {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: v,
                constraint: "finite and nonnegative",
            });
        }
    }
    if model.p() != template.p() {
        return Err(Error::DimensionMismatch {
            what: "model slopes",
            expected: template.p(),
            actual: model.p(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn method_outcome(
    sample: &SurvivalSample,
    tau: ExpectileIndex,
    weights: &crate::km::IpcwWeights,
    study: &StudyConfig,
    lambda: f64,
    truth: &DVector<f64>,
    offset: usize,
    active: &[usize],
    zero: &[usize],
) -> Option<MethodOutcome> {
    let (beta_hat, est_active): (DVector<f64>, Option<Vec<usize>>) = if study.penalized {
        let fit = two_stage_fit(
            sample,
            tau,
            weights,
            lambda,
            study.gamma,
            false,
            &study.solver,
        )
        .ok()?;
        // slope indices in model coordinates, the intercept column dropped
        let est: Vec<usize> = fit
            .selection
            .active_set
            .iter()
            .copied()
            .filter(|&j| j >= offset)
            .map(|j| j - offset)
            .collect();
        (fit.selection.beta, Some(est))
    } else {
        let fit = fit_censored_expectile(sample, tau, weights, &study.solver, None).ok()?;
        (fit.beta, None)
    };

    let diff = &beta_hat - truth;
    let l2 = diff.norm();
    let active_errors: Vec<f64> = active.iter().map(|&j| diff[j + offset]).collect();

    let (true_zero_pct, false_zero_pct, exact_support) = match &est_active {
        Some(est) => {
            let tz = (!zero.is_empty()).then(|| {
                let kept = zero.iter().filter(|j| !est.contains(j)).count();
                100.0 * kept as f64 / zero.len() as f64
            });
            let fz = (!active.is_empty()).then(|| {
                let dropped = active.iter().filter(|j| !est.contains(j)).count();
                100.0 * dropped as f64 / active.len() as f64
            });
            let exact = est.len() == active.len() && active.iter().all(|j| est.contains(j));
            (tz, fz, Some(exact))
        }
        None => (None, None, None),
    };

    Some(MethodOutcome {
        l2,
        active_errors,
        true_zero_pct,
        false_zero_pct,
        exact_support,
        censored_fraction: sample.censored_fraction(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    model: &TrueModel,
    template: &DataGenConfig,
    study: &StudyConfig,
    taus: &[ExpectileIndex],
    lambda: f64,
    bound: f64,
    rep: u64,
    truth: &DVector<f64>,
    active: &[usize],
    zero: &[usize],
) -> Vec<Option<MethodOutcome>> {
    let mut cfg = template.clone();
    cfg.censoring_bound = bound;
    cfg.seed = derive_seed(study.seed, rep);

    let raw = match generate_dataset(&cfg, model) {
        Ok((s, _)) => s,
        Err(_) => return taus.iter().map(|_| None).collect(),
    };
    let sample = match study.intercept_mode {
        InterceptMode::Without => raw,
        InterceptMode::With => raw.with_intercept(),
    };
    let weights = match study.scheme.weights(&sample) {
        Ok((_, w)) => w,
        Err(_) => return taus.iter().map(|_| None).collect(),
    };
    let offset = matches!(study.intercept_mode, InterceptMode::With) as usize;

    taus.iter()
        .map(|&tau| {
            method_outcome(
                &sample, tau, &weights, study, lambda, truth, offset, active, zero,
            )
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Runs the study and aggregates per method. The `censoring_bound` of the
/// template is replaced by a calibrated one; the template seed is replaced
/// by per-replication seeds derived from `study.seed`.
pub fn run_study(
    model: &TrueModel,
    template: &DataGenConfig,
    study: &StudyConfig,
) -> Result<StudyReport> {
    validate_study(model, template, study)?;
    let n = template.n;
    let lambda = study.lambda_rule.lambda(n);
    let taus: Vec<ExpectileIndex> = study
        .methods
        .iter()
        .map(|m| m.tau(template.error_dist))
        .collect();

    let bound = calibrate_censoring_bound(
        model,
        template,
        study.target_censoring,
        study.rate_tol,
        derive_seed(study.seed, CALIBRATION_TAG),
    )?;

    let offset = matches!(study.intercept_mode, InterceptMode::With) as usize;
    let mut truth = DVector::zeros(model.p() + offset);
    if offset == 1 {
        truth[0] = template.intercept;
    }
    for (j, b) in model.beta.iter().enumerate() {
        truth[j + offset] = *b;
    }
    let active = model.active_set();
    let zero: Vec<usize> = (0..model.p()).filter(|j| !active.contains(j)).collect();

    let outcomes: Vec<Vec<Option<MethodOutcome>>> = (0..study.reps as u64)
        .into_par_iter()
        .map(|rep| {
            run_one(
                model, template, study, &taus, lambda, bound, rep, &truth, &active, &zero,
            )
        })
        .collect();

    let mut methods = Vec::with_capacity(study.methods.len());
    for (k, &method) in study.methods.iter().enumerate() {
        let mut l2s = Vec::new();
        let mut pooled_active = Vec::new();
        let mut coord_errors: Vec<Vec<f64>> = vec![Vec::new(); active.len()];
        let mut tzs = Vec::new();
        let mut fzs = Vec::new();
        let mut exact = Vec::new();
        let mut cfs = Vec::new();
        for rep_out in &outcomes {
            let Some(out) = rep_out[k].as_ref() else {
                continue;
            };
            l2s.push(out.l2);
            pooled_active.extend_from_slice(&out.active_errors);
            for (jj, v) in out.active_errors.iter().enumerate() {
                coord_errors[jj].push(*v);
            }
            if let Some(v) = out.true_zero_pct {
                tzs.push(v);
            }
            if let Some(v) = out.false_zero_pct {
                fzs.push(v);
            }
            if let Some(v) = out.exact_support {
                exact.push(if v { 1.0 } else { 0.0 });
            }
            cfs.push(out.censored_fraction);
        }
        let used = l2s.len();
        let excluded = study.reps - used;
        if excluded * 20 > study.reps {
            return Err(Error::TooManyFailures {
                failed: excluded,
                total: study.reps,
                context: "study replications",
            });
        }
        methods.push(MethodReport {
            method,
            tau: taus[k].get(),
            l2_error: mean(&l2s),
            l2_sd: sd(&l2s),
            sd_active: sd(&pooled_active),
            sd_by_coord: coord_errors.iter().map(|c| sd(c)).collect(),
            pct_true_zeros: (!tzs.is_empty()).then(|| mean(&tzs)),
            pct_false_zeros: (!fzs.is_empty()).then(|| mean(&fzs)),
            exact_support_rate: (!exact.is_empty()).then(|| mean(&exact)),
            mean_censored_fraction: mean(&cfs),
            excluded,
        });
    }

    Ok(StudyReport {
        n,
        p: template.p(),
        reps: study.reps,
        seed: study.seed,
        error_dist: template.error_dist,
        target_censoring: study.target_censoring,
        censoring_bound: bound,
        penalized: study.penalized,
        lambda_rule: study.lambda_rule,
        lambda,
        gamma: study.gamma,
        intercept_mode: study.intercept_mode,
        methods,
    })
}
