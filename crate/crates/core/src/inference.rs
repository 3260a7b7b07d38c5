//! Asymptotic covariance of the censored expectile estimator.
//!
//! The sandwich has three plug-in pieces: the weighted score second moment
//! `S1`, a correction `S2` for having estimated the censoring survival curve
//! (an integral of the score's at-risk projection against the censoring
//! hazard), and the curvature `S3`. The covariance of `beta` is
//! `S3^{-1} (S1 + S2) S3^{-1} / n`. A nonparametric bootstrap that refits
//! the whole pipeline per resample is available as a cross-check.
//!
//! `S3` is averaged with the same inverse-probability weights as the score.
//! Residuals of censored rows are built from the censoring time, not the
//! lifetime, so an unweighted average over all rows estimates the curvature
//! of the wrong residual law and badly miscalibrates the standard errors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::km::{IpcwWeights, KaplanMeierCurve, WeightScheme};
use crate::loss::{self, ExpectileIndex};
use crate::sample::SurvivalSample;
use crate::solver::{fit_censored_expectile, FitResult, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPieces {
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub s3: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMethod {
    Plugin,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// Covariance of the estimator itself (sample-size scaling included).
    pub covariance: DMatrix<f64>,
    pub standard_errors: DVector<f64>,
    pub method: SeMethod,
    pub n: usize,
    /// Replicates that entered a bootstrap estimate; `None` for plug-in.
    pub replicates_used: Option<usize>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn covariance_from_pieces(pieces: &AsymptoticPieces, n: usize) -> Result<CovarianceEstimate> {
    let p = pieces.s3.nrows();
    let chol =
        nalgebra::Cholesky::new(pieces.s3.clone()).ok_or(Error::SingularMatrix { what: "S3" })?;
    let inv3 = chol.inverse();
    let mut cov = &inv3 * (&pieces.s1 + &pieces.s2) * &inv3 / n as f64;
    symmetrize(&mut cov);
    let standard_errors = DVector::from_fn(p, |j, _| cov[(j, j)].max(0.0).sqrt());
    Ok(CovarianceEstimate {
        covariance: cov,
        standard_errors,
        method: SeMethod::Plugin,
        n,
        replicates_used: None,
    })
}

/// Plug-in sandwich pieces and covariance at a fitted solution.
///
/// `curve` and `weights` must be the censoring-survival curve and weights the
/// fit was run with; the correction term integrates over that curve's jumps,
/// flooring survival values exactly as the weights do.
pub fn plug_in_covariance(
    sample: &SurvivalSample,
    fit: &FitResult,
    curve: &KaplanMeierCurve,
    weights: &IpcwWeights,
) -> Result<(AsymptoticPieces, CovarianceEstimate)> {
    let n = sample.n();
    let p = sample.p();
    if fit.beta.len() != p {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: p,
            actual: fit.beta.len(),
        });
    }
    if weights.values().len() != n {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: n,
            actual: weights.values().len(),
        });
    }
    let x = sample.x();
    let tau = fit.tau;
    let w = weights.values();

    let mut s1 = DMatrix::zeros(p, p);
    let mut s3 = DMatrix::zeros(p, p);
    for (i, &wi) in w.iter().enumerate() {
        let e = fit.residuals[i];
        let xi = x.row(i);
        let g = loss::shift_grad(tau, e);
        let c1 = wi * wi * g * g;
        let c3 = wi * loss::shift_hess(tau, e);
        for a in 0..p {
            for b in a..p {
                let prod = xi[a] * xi[b];
                s1[(a, b)] += c1 * prod;
                s3[(a, b)] += c3 * prod;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            s1[(a, b)] = s1[(b, a)];
            s3[(a, b)] = s3[(b, a)];
        }
    }
    s1 /= n as f64;
    s3 /= n as f64;

    // correction term: sum over censoring jumps s of
    //   k(s) k(s)' / ybar(s) * dLambda(s),
    // k(s) = n^{-1} sum_i w_i 1{y_i >= s} g(e_i) x_i, ybar = at-risk fraction
    let mut s2 = DMatrix::zeros(p, p);
    let increments = curve.hazard_increments(weights.floor());
    if !increments.is_empty() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sample.y()[b].partial_cmp(&sample.y()[a]).unwrap());
        let mut ksum = DVector::zeros(p);
        let mut at_risk = 0usize;
        let mut next = 0usize;
        for (s, dl) in increments.iter().rev() {
            while next < n && sample.y()[order[next]] >= *s {
                let i = order[next];
                let coef = w[i] * loss::shift_grad(tau, fit.residuals[i]);
                if coef != 0.0 {
                    ksum.axpy(coef, &x.row(i).transpose(), 1.0);
                }
                at_risk += 1;
                next += 1;
            }
            if at_risk == 0 {
                continue;
            }
            let k = &ksum / n as f64;
            let ybar = at_risk as f64 / n as f64;
            let scale = dl / ybar;
            for a in 0..p {
                for b in a..p {
                    s2[(a, b)] += scale * k[a] * k[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                s2[(a, b)] = s2[(b, a)];
            }
        }
    }

    let pieces = AsymptoticPieces { s1, s2, s3 };
    let estimate = covariance_from_pieces(&pieces, n)?;
    Ok((pieces, estimate))
}

/// Nonparametric bootstrap: resamples observations with replacement and
/// reruns the entire pipeline (censoring curve, weights, fit) per replicate.
/// Deterministic for a fixed seed at any parallelism level. Errors if more
/// than a tenth of replicates fail.
pub fn bootstrap_covariance(
    sample: &SurvivalSample,
    tau: ExpectileIndex,
    scheme: &WeightScheme,
    replicates: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<CovarianceEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidParameter {
            name: "replicates",
            value: replicates as f64,
            constraint: "bootstrap needs at least 2 replicates",
        });
    }
    let n = sample.n();
    let p = sample.p();
    let draws: Vec<Option<DVector<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let boot = sample.resample(&idx).ok()?;
            let (_, w) = scheme.weights(&boot).ok()?;
            fit_censored_expectile(&boot, tau, &w, config, None)
                .ok()
                .map(|f| f.beta)
        })
        .collect();

    let kept: Vec<&DVector<f64>> = draws.iter().flatten().collect();
    let failed = replicates - kept.len();
    if failed * 10 > replicates {
        return Err(Error::TooManyFailures {
            failed,
            total: replicates,
            context: "bootstrap refits",
        });
    }
    let m = kept.len();
    let mut mean = DVector::zeros(p);
    for b in &kept {
        mean += *b;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(p, p);
    for b in &kept {
        let d = *b - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (m - 1) as f64;
    symmetrize(&mut cov);
    let standard_errors = DVector::from_fn(p, |j, _| cov[(j, j)].max(0.0).sqrt());
    Ok(CovarianceEstimate {
        covariance: cov,
        standard_errors,
        method: SeMethod::Bootstrap,
        n,
        replicates_used: Some(m),
    })
}

/// Two-sided normal confidence intervals `beta_j -+ z se_j`.
pub fn confidence_intervals(
    beta: &DVector<f64>,
    cov: &CovarianceEstimate,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(level.is_finite() && level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            value: level,
            constraint: "must lie strictly inside (0, 1)",
        });
    }
    if beta.len() != cov.standard_errors.len() {
        return Err(Error::DimensionMismatch {
            what: "standard_errors",
            expected: beta.len(),
            actual: cov.standard_errors.len(),
        });
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + level));
    Ok(beta
        .iter()
        .zip(cov.standard_errors.iter())
        .map(|(&b, &se)| (b - z * se, b + z * se))
        .collect())
}

/// First-order bias of the penalized estimator on its active set:
/// `-(lambda / sqrt(n)) E[h]^{-1} E[X_A X_A']^{-1} (omega_A . sign(beta_A))`,
/// scattered into a full-length vector (zeros off the active set). Moments
/// are empirical; signs and residuals come from the pilot fit. Coordinates
/// with infinite weight are excluded; an unpenalized intercept enters with
/// weight zero.
pub fn penalty_bias_term(
    sample: &SurvivalSample,
    penalty: &crate::alasso::PenaltySpec,
    pilot: &FitResult,
) -> Result<DVector<f64>> {
    let n = sample.n();
    let p = sample.p();
    if penalty.adaptive_weights.len() != p {
        return Err(Error::DimensionMismatch {
            what: "adaptive_weights",
            expected: p,
            actual: penalty.adaptive_weights.len(),
        });
    }
    let active: Vec<usize> = (0..p)
        .filter(|&j| penalty.adaptive_weights[j].is_finite())
        .collect();
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let q = active.len();
    let x = sample.x();

    let mean_h = pilot
        .residuals
        .iter()
        .map(|&e| loss::shift_hess(pilot.tau, e))
        .sum::<f64>()
        / n as f64;

    let mut xx = DMatrix::zeros(q, q);
    for i in 0..n {
        for (a, &ja) in active.iter().enumerate() {
            for (b, &jb) in active.iter().enumerate().skip(a) {
                xx[(a, b)] += x[(i, ja)] * x[(i, jb)];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xx[(a, b)] = xx[(b, a)];
        }
    }
    xx /= n as f64;

    let signed = DVector::from_fn(q, |k, _| {
        let j = active[k];
        let omega = if j == 0 && sample.has_intercept() && !penalty.penalize_intercept {
            0.0
        } else {
            penalty.adaptive_weights[j]
        };
        omega * pilot.beta[j].signum() * (pilot.beta[j] != 0.0) as u8 as f64
    });
    let chol = nalgebra::Cholesky::new(xx).ok_or(Error::SingularMatrix {
        what: "active-set second moment",
    })?;
    let core = chol.solve(&signed);
    let l0 = penalty.lambda / (n as f64).sqrt();
    let mut bias = DVector::zeros(p);
    for (k, &j) in active.iter().enumerate() {
        bias[j] = -core[k] * l0 / mean_h;
    }
    Ok(bias)
}
