//! Adaptively weighted L1 penalization of the censored expectile objective.
//!
//! The penalized criterion is `sum_i w_i rho(tau, e_i) + lambda sum_j
//! omega_j |beta_j|`, where the `omega_j` come from a pilot fit. An infinite
//! weight (pilot coefficient at zero) freezes its coordinate at an exact
//! zero. The minimizer is found by an outer curvature-freezing pass (the
//! quadratic majorization of the loss) with inner cyclic coordinate descent
//! and exact soft-thresholding; zeros are produced by the threshold itself,
//! never by rounding.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km::IpcwWeights;
use crate::loss::{self, ExpectileIndex};
use crate::sample::SurvivalSample;
use crate::solver::{self, FitResult, SolverConfig};

/// Pilot coefficients with magnitude at or below this are treated as zero
/// when forming adaptive weights.
pub const ZERO_TOL: f64 = 1e-12;

/// Inner coordinate-descent stop: largest single-coordinate move in a cycle.
pub const CD_TOL: f64 = 1e-10;

const MAX_CYCLES: usize = 500;
const MAX_HALVINGS: usize = 40;

/// `omega_j = |pilot_j|^(-gamma)`, with exact-zero pilots mapped to
/// `+inf` (the coordinate is then constrained to zero downstream).
pub fn adaptive_weights(pilot: &DVector<f64>, gamma: f64, zero_tol: f64) -> Result<Vec<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
            constraint: "must be finite and positive",
        });
    }
    if !(zero_tol.is_finite() && zero_tol >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "zero_tol",
            value: zero_tol,
            constraint: "must be finite and nonnegative",
        });
    }
    Ok(pilot
        .iter()
        .map(|&b| {
            if b.abs() <= zero_tol {
                f64::INFINITY
            } else {
                b.abs().powf(-gamma)
            }
        })
        .collect())
}

/// Default penalty level `n^0.4`, growing slower than `sqrt(n)`.
pub fn default_lambda(n: usize) -> f64 {
    (n as f64).powf(0.4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub gamma: f64,
    pub adaptive_weights: Vec<f64>,
    /// When the sample declares an intercept column, leave it unpenalized.
    pub penalize_intercept: bool,
}

impl PenaltySpec {
    pub fn new(
        lambda: f64,
        gamma: f64,
        adaptive_weights: Vec<f64>,
        penalize_intercept: bool,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
                constraint: "must be finite and nonnegative",
            });
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                constraint: "must be finite and positive",
            });
        }
        if let Some(&bad) = adaptive_weights.iter().find(|w| w.is_nan() || **w < 0.0) {
            return Err(Error::InvalidParameter {
                name: "adaptive_weights",
                value: bad,
                constraint: "must be nonnegative (infinity allowed)",
            });
        }
        Ok(Self {
            lambda,
            gamma,
            adaptive_weights,
            penalize_intercept,
        })
    }

    /// Per-coordinate penalty state. `None` marks a frozen coordinate.
    fn thresholds(&self, sample: &SurvivalSample) -> Result<Vec<Option<f64>>> {
        let p = sample.p();
        if self.adaptive_weights.len() != p {
            return Err(Error::DimensionMismatch {
                what: "adaptive_weights",
                expected: p,
                actual: self.adaptive_weights.len(),
            });
        }
        Ok((0..p)
            .map(|j| {
                if j == 0 && sample.has_intercept() && !self.penalize_intercept {
                    Some(0.0)
                } else if self.adaptive_weights[j].is_infinite() {
                    None
                } else {
                    Some(self.lambda * self.adaptive_weights[j])
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenalizedFitResult {
    pub beta: DVector<f64>,
    /// Indices of exactly nonzero coefficients, ascending.
    pub active_set: Vec<usize>,
    pub tau: ExpectileIndex,
    pub penalty: PenaltySpec,
    /// Loss plus penalty at `beta`.
    pub objective: f64,
    pub kkt_max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after the initial point and each accepted pass.
    pub objective_path: Vec<f64>,
}

fn penalized_objective(
    beta: &DVector<f64>,
    sample: &SurvivalSample,
    weights: &[f64],
    tau: ExpectileIndex,
    thresholds: &[Option<f64>],
) -> Result<f64> {
    let base = loss::objective(beta, sample, weights, tau)?.objective;
    let mut pen = 0.0;
    for (j, thr) in thresholds.iter().enumerate() {
        if let Some(t) = thr {
            pen += t * beta[j].abs();
        }
    }
    Ok(base + pen)
}

#[inline]
fn soft(z: f64, thr: f64) -> f64 {
    if z > thr {
        z - thr
    } else if z < -thr {
        z + thr
    } else {
        0.0
    }
}

/// Largest violation of the subgradient stationarity conditions at `beta`,
/// measured against the unpenalized loss gradient: at zeros the gradient may
/// not exceed the threshold; elsewhere gradient plus signed threshold must
/// vanish. Frozen coordinates carry no condition.
pub fn kkt_max_violation(
    sample: &SurvivalSample,
    tau: ExpectileIndex,
    weights: &IpcwWeights,
    penalty: &PenaltySpec,
    beta: &DVector<f64>,
) -> Result<f64> {
    let thresholds = penalty.thresholds(sample)?;
    let grad = loss::objective_gradient(beta, sample, weights.values(), tau)?;
    let mut worst = 0.0f64;
    for (j, thr) in thresholds.iter().enumerate() {
        let v = match thr {
            None => 0.0,
            Some(t) => {
                if beta[j] == 0.0 {
                    (grad[j].abs() - t).max(0.0)
                } else {
                    (grad[j] + t * beta[j].signum()).abs()
                }
            }
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Minimizes the adaptively penalized censored expectile objective.
///
/// `init` defaults to the zero vector; pass the pilot solution for the usual
/// warm start. Convergence is certified by the KKT residual at a relative
/// tolerance of `1e-6 * (1 + lambda)`.
pub fn fit_censored_alasso(
    sample: &SurvivalSample,
    tau: ExpectileIndex,
    weights: &IpcwWeights,
    penalty: &PenaltySpec,
    config: &SolverConfig,
    init: Option<&DVector<f64>>,
) -> Result<PenalizedFitResult> {
    let n = sample.n();
    let p = sample.p();
    if weights.values().len() != n {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: n,
            actual: weights.values().len(),
        });
    }
    let thresholds = penalty.thresholds(sample)?;
    let x = sample.x();
    let w = weights.values();

    let mut beta = match init {
        Some(b) => {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "init",
                    expected: p,
                    actual: b.len(),
                });
            }
            b.clone()
        }
        None => DVector::zeros(p),
    };
    for (j, thr) in thresholds.iter().enumerate() {
        if thr.is_none() {
            beta[j] = 0.0;
        }
    }

    let mut resid = sample.log_y() - x * &beta;
    let mut obj = penalized_objective(&beta, sample, w, tau, &thresholds)?;
    let mut path = vec![obj];
    let mut iterations = 0;
    let mut u = vec![0.0; n];

    for outer in 1..=config.max_iter {
        for i in 0..n {
            u[i] = w[i] * loss::shift_hess(tau, resid[i]);
        }
        let curvature: Vec<f64> = (0..p)
            .map(|j| {
                x.column(j)
                    .iter()
                    .zip(&u)
                    .map(|(&xij, &ui)| ui * xij * xij)
                    .sum()
            })
            .collect();

        // inner cyclic coordinate descent on the frozen-curvature model
        let mut cand = beta.clone();
        let mut r = resid.clone();
        for _ in 0..MAX_CYCLES {
            let mut max_move = 0.0f64;
            for j in 0..p {
                let Some(thr) = thresholds[j] else { continue };
                let aj = curvature[j];
                let col = x.column(j);
                let zj: f64 = col
                    .iter()
                    .zip(u.iter().zip(r.iter()))
                    .map(|(&xij, (&ui, &ri))| ui * xij * ri)
                    .sum::<f64>()
                    + aj * cand[j];
                let bj = if aj > 0.0 { soft(zj, thr) / aj } else { 0.0 };
                let dj = bj - cand[j];
                if dj != 0.0 {
                    for (ri, &xij) in r.iter_mut().zip(col.iter()) {
                        *ri -= dj * xij;
                    }
                    cand[j] = bj;
                }
                max_move = max_move.max(dj.abs());
            }
            if max_move < CD_TOL {
                break;
            }
        }

        // accept against the exact penalized objective, halving if needed
        let mut accepted = None;
        let mut step = 1.0f64;
        for _ in 0..=MAX_HALVINGS {
            let trial = if step == 1.0 {
                cand.clone()
            } else {
                &beta + (&cand - &beta) * step
            };
            let trial_obj = penalized_objective(&trial, sample, w, tau, &thresholds)?;
            if trial_obj <= obj {
                accepted = Some((trial, trial_obj, step));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_obj, step)) = accepted else {
            break;
        };

        let move_inf = (&next - &beta).amax();
        let decrease = obj - next_obj;
        beta = next;
        obj = next_obj;
        resid = sample.log_y() - x * &beta;
        iterations = outer;
        path.push(obj);
        if step == 1.0 && (move_inf <= CD_TOL || decrease <= config.tol * obj.abs().max(1.0)) {
            break;
        }
    }

    let kkt = kkt_max_violation(sample, tau, weights, penalty, &beta)?;
    let converged = kkt <= 1e-6 * (1.0 + penalty.lambda);
    let active_set = (0..p).filter(|&j| beta[j] != 0.0).collect();
    Ok(PenalizedFitResult {
        active_set,
        tau,
        penalty: penalty.clone(),
        objective: obj,
        kkt_max_violation: kkt,
        iterations,
        converged,
        objective_path: path,
        beta,
    })
}

/// Pilot fit, penalized selection, and unpenalized refit on the active set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStageFit {
    pub pilot: FitResult,
    pub selection: PenalizedFitResult,
    /// Columns the refit was run on (intercept included when declared).
    pub refit_columns: Vec<usize>,
    /// `None` when the selection kept no covariates.
    pub refit: Option<FitResult>,
}

impl TwoStageFit {
    /// Refit coefficients scattered back into a full-length vector.
    pub fn refit_beta_full(&self) -> Option<DVector<f64>> {
        let refit = self.refit.as_ref()?;
        let mut full = DVector::zeros(self.selection.beta.len());
        for (k, &j) in self.refit_columns.iter().enumerate() {
            full[j] = refit.beta[k];
        }
        Some(full)
    }
}

/// Runs the full selection pipeline: unpenalized pilot, adaptive weights,
/// penalized fit (warm-started at the pilot), then an unpenalized refit on
/// the selected columns. An empty selection skips the refit.
pub fn two_stage_fit(
    sample: &SurvivalSample,
    tau: ExpectileIndex,
    weights: &IpcwWeights,
    lambda: f64,
    gamma: f64,
    penalize_intercept: bool,
    config: &SolverConfig,
) -> Result<TwoStageFit> {
    let pilot = solver::fit_censored_expectile(sample, tau, weights, config, None)?;
    let omega = adaptive_weights(&pilot.beta, gamma, ZERO_TOL)?;
    let penalty = PenaltySpec::new(lambda, gamma, omega, penalize_intercept)?;
    let selection = fit_censored_alasso(sample, tau, weights, &penalty, config, Some(&pilot.beta))?;

    let intercept_col = sample.has_intercept().then_some(0usize);
    let selected: Vec<usize> = selection
        .active_set
        .iter()
        .copied()
        .filter(|&j| Some(j) != intercept_col)
        .collect();
    let mut refit_columns = Vec::new();
    if let Some(c) = intercept_col {
        refit_columns.push(c);
    }
    refit_columns.extend(&selected);

    let refit = if selected.is_empty() {
        None
    } else {
        let sub = sample.select_columns(&refit_columns)?;
        Some(solver::fit_censored_expectile(
            &sub, tau, weights, config, None,
        )?)
    };
    Ok(TwoStageFit {
        pilot,
        selection,
        refit_columns,
        refit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::km::WeightScheme;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tau(t: f64) -> ExpectileIndex {
        ExpectileIndex::new(t).unwrap()
    }

    fn random_instance(seed: u64, n: usize, p: usize) -> (SurvivalSample, IpcwWeights) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.5..1.5) + 1.0);
        let beta: Vec<f64> = (0..p)
            .map(|j| if j < 2 { rng.gen_range(0.5..2.0) } else { 0.0 })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let mut lin = 0.0;
                for j in 0..p {
                    lin += x[(i, j)] * beta[j];
                }
                (lin + rng.gen_range(-0.8..0.8)).exp()
            })
            .collect();
        let delta: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();
        let s = SurvivalSample::new(y, delta, x).unwrap();
        let (_, w) = WeightScheme::default().weights(&s).unwrap();
        (s, w)
    }

    #[test]
    fn adaptive_weights_formula() {
        let pilot = DVector::from_row_slice(&[2.0, 0.0, -0.5]);
        let w = adaptive_weights(&pilot, 2.0, ZERO_TOL).unwrap();
        assert_relative_eq!(w[0], 0.25);
        assert!(w[1].is_infinite());
        assert_relative_eq!(w[2], 4.0);
    }

    #[test]
    fn default_lambda_values() {
        assert_relative_eq!(default_lambda(1024), 16.0, max_relative = 1e-12);
        assert_relative_eq!(default_lambda(400), 10.98560543306118, max_relative = 1e-9);
    }

    #[test]
    fn zero_lambda_matches_unpenalized() {
        let (s, w) = random_instance(41, 60, 3);
        let t = tau(0.35);
        let cfg = SolverConfig::default();
        let free = solver::fit_censored_expectile(&s, t, &w, &cfg, None).unwrap();
        let penalty = PenaltySpec::new(0.0, 2.0, vec![1.0, 1.0, 1.0], true).unwrap();
        let fit = fit_censored_alasso(&s, t, &w, &penalty, &cfg, None).unwrap();
        assert!(fit.converged);
        for j in 0..3 {
            assert_relative_eq!(fit.beta[j], free.beta[j], epsilon = 1e-8);
        }
        // with lambda = 0 the KKT residual is just the gradient norm
        assert_relative_eq!(fit.kkt_max_violation, free.grad_norm, epsilon = 1e-8);
    }

    #[test]
    fn huge_lambda_zeroes_all_penalized_coordinates() {
        let (s, w) = random_instance(42, 50, 4);
        let t = tau(0.5);
        let cfg = SolverConfig::default();
        let fit = two_stage_fit(&s, t, &w, 1e12, 2.0, true, &cfg).unwrap();
        for j in 0..4 {
            assert_eq!(
                fit.selection.beta[j], 0.0,
                "coordinate {j} not an exact zero"
            );
        }
        assert!(fit.selection.active_set.is_empty());
        assert!(fit.refit.is_none());
        assert!(fit.refit_columns.is_empty());
    }

    #[test]
    fn extreme_active_sets_are_nested() {
        let (s, w) = random_instance(43, 70, 4);
        let t = tau(0.4);
        let cfg = SolverConfig::default();
        let loose = two_stage_fit(&s, t, &w, 0.0, 2.0, true, &cfg).unwrap();
        let tight = two_stage_fit(&s, t, &w, 1e12, 2.0, true, &cfg).unwrap();
        for j in &tight.selection.active_set {
            assert!(loose.selection.active_set.contains(j));
        }
    }

    #[test]
    fn frozen_coordinate_stays_zero() {
        let (s, w) = random_instance(44, 50, 3);
        let t = tau(0.5);
        let cfg = SolverConfig::default();
        let penalty = PenaltySpec::new(0.0, 2.0, vec![1.0, f64::INFINITY, 1.0], true).unwrap();
        let init = DVector::from_row_slice(&[0.0, 5.0, 0.0]);
        let fit = fit_censored_alasso(&s, t, &w, &penalty, &cfg, Some(&init)).unwrap();
        assert_eq!(fit.beta[1], 0.0);
        assert!(!fit.active_set.contains(&1));
    }

    fn golden_section(mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64) -> f64 {
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - phi * (hi - lo);
        let mut d = lo + phi * (hi - lo);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..220 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = f(d);
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn univariate_matches_golden_section_oracle() {
        for seed in 0..8u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(100 + seed);
            let n = 30;
            let x = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.2..2.0));
            let y: Vec<f64> = (0..n)
                .map(|i| (x[(i, 0)] * 1.3 + rng.gen_range(-0.5..0.5f64)).exp())
                .collect();
            let delta: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();
            let s = SurvivalSample::new(y, delta, x).unwrap();
            let (_, w) = WeightScheme::default().weights(&s).unwrap();
            if w.positive_count() == 0 {
                continue;
            }
            let t = tau(0.3);
            let lambda = rng.gen_range(0.0..3.0);
            let omega = rng.gen_range(0.2..2.0);
            let penalty = PenaltySpec::new(lambda, 2.0, vec![omega], false).unwrap();
            let cfg = SolverConfig::default();
            let fit = fit_censored_alasso(&s, t, &w, &penalty, &cfg, None).unwrap();
            let obj = |b: f64| {
                let beta = DVector::from_row_slice(&[b]);
                loss::objective(&beta, &s, w.values(), t).unwrap().objective
                    + lambda * omega * b.abs()
            };
            let oracle = golden_section(-8.0, 8.0, &obj);
            assert!(
                (fit.beta[0] - oracle).abs() <= 1e-6,
                "seed {seed}: {} vs {}",
                fit.beta[0],
                oracle
            );
        }
    }

    #[test]
    fn kkt_certificate_holds_on_random_instances() {
        for seed in 0..20u64 {
            let (s, w) = random_instance(200 + seed, 60, 5);
            let t = tau(0.25 + 0.02 * seed as f64);
            let cfg = SolverConfig::default();
            let lambda = default_lambda(s.n());
            let fit = two_stage_fit(&s, t, &w, lambda, 2.0, true, &cfg).unwrap();
            assert!(
                fit.selection.converged,
                "seed {seed}: kkt violation {}",
                fit.selection.kkt_max_violation
            );
            let recomputed =
                kkt_max_violation(&s, t, &w, &fit.selection.penalty, &fit.selection.beta).unwrap();
            assert!((recomputed - fit.selection.kkt_max_violation).abs() <= 1e-10);
        }
    }

    #[test]
    fn penalized_objective_path_is_monotone() {
        for seed in 0..10u64 {
            let (s, w) = random_instance(300 + seed, 40, 4);
            let t = tau(0.6);
            let cfg = SolverConfig::default();
            let fit = two_stage_fit(&s, t, &w, 2.0, 2.0, true, &cfg).unwrap();
            let path = &fit.selection.objective_path;
            for k in 1..path.len() {
                assert!(path[k] <= path[k - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn active_set_is_exact_nonzero_pattern() {
        let (s, w) = random_instance(77, 80, 6);
        let t = tau(0.3);
        let cfg = SolverConfig::default();
        let fit = two_stage_fit(&s, t, &w, default_lambda(80), 2.0, true, &cfg).unwrap();
        for j in 0..6 {
            let in_set = fit.selection.active_set.contains(&j);
            assert_eq!(in_set, fit.selection.beta[j] != 0.0);
        }
    }

    #[test]
    fn refit_agrees_with_direct_fit_on_selected_columns() {
        let (s, w) = random_instance(88, 90, 5);
        let t = tau(0.45);
        let cfg = SolverConfig::default();
        let fit = two_stage_fit(&s, t, &w, default_lambda(90), 2.0, true, &cfg).unwrap();
        let Some(refit) = &fit.refit else {
            panic!("selection was empty");
        };
        let sub = s.select_columns(&fit.refit_columns).unwrap();
        let direct = solver::fit_censored_expectile(&sub, t, &w, &cfg, None).unwrap();
        for j in 0..sub.p() {
            assert_relative_eq!(refit.beta[j], direct.beta[j], epsilon = 1e-10);
        }
        let full = fit.refit_beta_full().unwrap();
        assert_eq!(full.len(), 5);
        for (k, &j) in fit.refit_columns.iter().enumerate() {
            assert_eq!(full[j], refit.beta[k]);
        }
    }

    #[test]
    fn intercept_is_unpenalized_by_default() {
        let mut rng = ChaCha12Rng::seed_from_u64(5150);
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|_| (3.0 + rng.gen_range(-0.2..0.2f64)).exp())
            .collect();
        let s = SurvivalSample::new(y, vec![true; n], x)
            .unwrap()
            .with_intercept();
        let w = IpcwWeights::uniform(n);
        let cfg = SolverConfig::default();
        let fit = two_stage_fit(&s, tau(0.5), &w, 1e12, 2.0, false, &cfg).unwrap();
        // slopes are crushed to zero, the intercept survives near 3
        assert_eq!(fit.selection.beta[1], 0.0);
        assert_eq!(fit.selection.beta[2], 0.0);
        assert!((fit.selection.beta[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_penalty_parameters() {
        assert!(PenaltySpec::new(-1.0, 2.0, vec![1.0], true).is_err());
        assert!(PenaltySpec::new(1.0, 0.0, vec![1.0], true).is_err());
        assert!(PenaltySpec::new(1.0, 2.0, vec![-0.5], true).is_err());
        assert!(PenaltySpec::new(1.0, 2.0, vec![f64::INFINITY], true).is_ok());
    }
}
