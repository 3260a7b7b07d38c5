//! Synthetic accelerated failure time data.
//!
//! Log lifetimes follow `ln T = b0 + x'b + eps` with independent normal
//! covariates and a uniform censoring time on `(0, bound)`. The bound is
//! what controls the censoring rate, so it is usually found by
//! [`calibrate_censoring_bound`] rather than set directly.

use nalgebra::{DMatrix, DVector};
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::ExpectileIndex;
use crate::sample::SurvivalSample;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Distribution of the log-scale error term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorDist {
    /// Standard Gumbel (maximum form), density `exp(-x - e^{-x})`.
    Gumbel,
    /// Uniform on `[-7/6, 11/6]`, a uniform centered to mean `1/3`.
    ShiftedUniform,
}

impl ErrorDist {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Gumbel => {
                let u: f64 = rng.sample(Open01);
                -(-u.ln()).ln()
            }
            ErrorDist::ShiftedUniform => rng.gen_range(-1.0..2.0f64) - 1.0 / 6.0,
        }
    }
}

/// Expectile index at which the population stationarity condition
/// `E[g_tau(eps)] = 0` holds, so the fit identifies the true slopes.
///
/// With `A = E[eps 1{eps >= 0}]` and `B = -E[eps 1{eps < 0}]` the index is
/// `B / (A + B)`. For the shifted uniform both parts are rational; for the
/// Gumbel the positive part is evaluated by quadrature and `B = A - gamma`
/// via the known mean.
pub fn centering_tau(dist: ErrorDist) -> ExpectileIndex {
    let tau = match dist {
        ErrorDist::ShiftedUniform => {
            // A = (11/6)^2 / 6 = 121/216, B = (7/6)^2 / 6 = 49/216.
            49.0 / 170.0
        }
        ErrorDist::Gumbel => {
            let a = gumbel_positive_part_mean();
            let b = a - EULER_GAMMA;
            b / (a + b)
        }
    };
    ExpectileIndex::new(tau).expect("centering index is interior")
}

/// `E[eps 1{eps >= 0}]` for the standard Gumbel by composite Simpson on
/// `[0, 50]`. The integrand `x exp(-x - e^{-x})` is smooth there and the
/// discarded tail is below `1e-19`, so the rule is accurate to roughly
/// machine precision at this panel count.
fn gumbel_positive_part_mean() -> f64 {
    let f = |x: f64| x * (-x - (-x).exp()).exp();
    let panels = 1_000_000usize;
    let b = 50.0;
    let h = b / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..panels {
        let fx = f(k as f64 * h);
        if k % 2 == 1 {
            odd += fx;
        } else {
            even += fx;
        }
    }
    (f(0.0) + f(b) + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// True slope vector of the generating model. The intercept is not a slope;
/// it lives in [`DataGenConfig::intercept`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta: Vec<f64>,
}

impl TrueModel {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta }
    }

    /// Slopes `0.9, -2, 0.5, 1, -1` padded with zeros to length `p`.
    pub fn sparse_default(p: usize) -> Result<Self> {
        if p < 5 {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p as f64,
                constraint: "at least 5 for the default sparse model",
            });
        }
        let mut beta = vec![0.0; p];
        beta[..5].copy_from_slice(&[0.9, -2.0, 0.5, 1.0, -1.0]);
        Ok(Self { beta })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Indices of the nonzero slopes.
    pub fn active_set(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Marginal law of one covariate column; columns are drawn independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub mean: f64,
    pub sd: f64,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        Self { mean: 1.0, sd: 1.0 }
    }
}

/// Everything needed to draw one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenConfig {
    pub n: usize,
    pub error_dist: ErrorDist,
    /// One spec per covariate column.
    pub covariates: Vec<CovariateSpec>,
    /// Upper endpoint of the censoring law `C ~ U(0, bound)`.
    pub censoring_bound: f64,
    /// True intercept of the log-lifetime equation.
    pub intercept: f64,
    pub seed: u64,
}

impl DataGenConfig {
    /// `p` standard-normal-around-one covariates, no intercept.
    pub fn standard(
        n: usize,
        p: usize,
        error_dist: ErrorDist,
        censoring_bound: f64,
        seed: u64,
    ) -> Self {
        Self {
            n,
            error_dist,
            covariates: vec![CovariateSpec::default(); p],
            censoring_bound,
            intercept: 0.0,
            seed,
        }
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }
}

/// Latent quantities kept alongside a generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub log_t: Vec<f64>,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Derived seed for a subtask, a splitmix64 finalizer over the master seed
/// and a role tag. Tasks get decorrelated generators that stay reproducible
/// under any scheduling.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn validate(config: &DataGenConfig, model: &TrueModel) -> Result<()> {
    if config.n == 0 {
        return Err(Error::EmptySample);
    }
    if config.covariates.is_empty() {
        return Err(Error::InvalidParameter {
            name: "covariates",
            value: 0.0,
            constraint: "at least one column",
        });
    }
    if model.p() != config.p() {
        return Err(Error::DimensionMismatch {
            what: "model slopes",
            expected: config.p(),
            actual: model.p(),
        });
    }
    for spec in &config.covariates {
        if !(spec.sd > 0.0 && spec.sd.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "covariates.sd",
                value: spec.sd,
                constraint: "finite and positive",
            });
        }
        if !spec.mean.is_finite() {
            return Err(Error::InvalidParameter {
                name: "covariates.mean",
                value: spec.mean,
                constraint: "finite",
            });
        }
    }
    if !(config.censoring_bound > 0.0 && config.censoring_bound.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "censoring_bound",
            value: config.censoring_bound,
            constraint: "finite and positive",
        });
    }
    if !config.intercept.is_finite() {
        return Err(Error::InvalidParameter {
            name: "intercept",
            value: config.intercept,
            constraint: "finite",
        });
    }
    Ok(())
}

/// Draws one dataset. Covariates, errors, and censoring times come from
/// separate generator streams of the same seed, and covariates are drawn
/// column by column, so adding a column or changing one source leaves the
/// other draws untouched.
pub fn generate_dataset(
    config: &DataGenConfig,
    model: &TrueModel,
) -> Result<(SurvivalSample, LatentRecord)> {
    validate(config, model)?;
    let n = config.n;
    let p = config.p();

    let mut cov_rng = stream_rng(config.seed, 0);
    let mut err_rng = stream_rng(config.seed, 1);
    let mut cen_rng = stream_rng(config.seed, 2);

    let mut x = DMatrix::zeros(n, p);
    for (j, spec) in config.covariates.iter().enumerate() {
        let dist = Normal::new(spec.mean, spec.sd).expect("validated spec");
        for i in 0..n {
            x[(i, j)] = dist.sample(&mut cov_rng);
        }
    }

    let eps: Vec<f64> = (0..n)
        .map(|_| config.error_dist.draw(&mut err_rng))
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|_| config.censoring_bound * cen_rng.sample::<f64, _>(Open01))
        .collect();

    let slopes = DVector::from_column_slice(&model.beta);
    let lin = &x * &slopes;

    let mut log_t = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for i in 0..n {
        let lt = config.intercept + lin[i] + eps[i];
        let ti = lt.exp();
        log_t.push(lt);
        t.push(ti);
        y.push(ti.min(c[i]));
        delta.push(ti <= c[i]);
    }

    let sample = SurvivalSample::new(y, delta, x)?;
    Ok((sample, LatentRecord { log_t, t, c, eps }))
}

/// Latent draws used by [`calibrate_censoring_bound`].
pub const CALIBRATION_DRAWS: usize = 100_000;

fn censoring_rate(t: &[f64], u: &[f64], bound: f64) -> f64 {
    let hits = t
        .iter()
        .zip(u)
        .filter(|&(&ti, &ui)| ti > bound * ui)
        .count();
    hits as f64 / t.len() as f64
}

/// Bisection for the bound on a fixed set of latent lifetimes `t` and
/// uniform draws `u`; the empirical rate `P[t > bound * u]` is monotone
/// nonincreasing in the bound, so the shared draws make the map exact to
/// bisect on.
pub(crate) fn bisect_bound(t: &[f64], u: &[f64], target: f64, tol: f64) -> Result<f64> {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while censoring_rate(t, u, hi) > target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 1_100 {
            return Err(Error::BracketNotFound { target });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rate = censoring_rate(t, u, mid);
        if (rate - target).abs() <= tol {
            return Ok(mid);
        }
        if rate > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BracketNotFound { target })
}

/// Finds the censoring bound giving rate `target` within `tol`, by
/// bisection on a Monte Carlo sample of [`CALIBRATION_DRAWS`] latent
/// lifetimes drawn under `model`. The `censoring_bound` and `seed` fields
/// of `config` are ignored; randomness comes from `seed` alone, so the
/// result is reproducible.
pub fn calibrate_censoring_bound(
    model: &TrueModel,
    config: &DataGenConfig,
    target: f64,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "target",
            value: target,
            constraint: "in (0, 1)",
        });
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            constraint: "finite and positive",
        });
    }
    let mut probe = config.clone();
    probe.censoring_bound = 1.0;
    validate(&probe, model)?;

    let mut cov_rng = stream_rng(seed, 0);
    let mut err_rng = stream_rng(seed, 1);
    let mut cen_rng = stream_rng(seed, 2);
    let dists: Vec<Normal<f64>> = config
        .covariates
        .iter()
        .map(|s| Normal::new(s.mean, s.sd).expect("validated spec"))
        .collect();

    let m = CALIBRATION_DRAWS;
    let mut t = Vec::with_capacity(m);
    for _ in 0..m {
        let mut lin = config.intercept;
        for (dist, b) in dists.iter().zip(&model.beta) {
            lin += b * dist.sample(&mut cov_rng);
        }
        lin += config.error_dist.draw(&mut err_rng);
        t.push(lin.exp());
    }
    let u: Vec<f64> = (0..m).map(|_| cen_rng.sample::<f64, _>(Open01)).collect();
    bisect_bound(&t, &u, target, tol)
}
