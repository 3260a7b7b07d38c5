//! Asymmetric quadratic (expectile) loss kernel.
//!
//! The loss is `rho(tau, x) = |tau - 1{x<0}| * x^2`. Its shift derivatives
//! are taken in the direction of a location shift `t |-> rho(tau, x - t)`:
//! `g = d/dt at t=0` and `h = d^2/dt^2`, so `g(tau, x) = -h(tau, x) * x`.
//! Both treat `x = 0` on the right-continuous (`tau`) branch.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::SurvivalSample;

/// Asymmetry level, restricted to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpectileIndex(f64);

impl ExpectileIndex {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: tau,
                constraint: "must lie strictly inside (0, 1)",
            });
        }
        Ok(Self(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Mean-regression special case.
    pub fn symmetric() -> Self {
        Self(0.5)
    }
}

/// `rho(tau, x)`: asymmetric square with weight `tau` on the nonnegative side.
#[inline]
pub fn value(tau: ExpectileIndex, x: f64) -> f64 {
    let a = if x >= 0.0 { tau.0 } else { 1.0 - tau.0 };
    a * x * x
}

/// First shift derivative: `d/dt rho(tau, x - t)` at `t = 0`.
#[inline]
pub fn shift_grad(tau: ExpectileIndex, x: f64) -> f64 {
    -shift_hess(tau, x) * x
}

/// Second shift derivative, constant on each side of the kink.
#[inline]
pub fn shift_hess(tau: ExpectileIndex, x: f64) -> f64 {
    if x >= 0.0 {
        2.0 * tau.0
    } else {
        2.0 * (1.0 - tau.0)
    }
}

/// Residuals, per-case weights and the weighted objective at a given `beta`.
#[derive(Debug, Clone)]
pub struct WeightedObjectiveState {
    pub residuals: DVector<f64>,
    pub case_weights: Vec<f64>,
    pub objective: f64,
}

fn check_shapes(beta: &DVector<f64>, sample: &SurvivalSample, weights: &[f64]) -> Result<()> {
    if beta.len() != sample.p() {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: sample.p(),
            actual: beta.len(),
        });
    }
    if weights.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: sample.n(),
            actual: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidParameter {
            name: "weights",
            value: w,
            constraint: "must be finite and nonnegative",
        });
    }
    Ok(())
}

/// Weighted objective `sum_i w_i rho(tau, ln y_i - x_i' beta)`.
pub fn objective(
    beta: &DVector<f64>,
    sample: &SurvivalSample,
    weights: &[f64],
    tau: ExpectileIndex,
) -> Result<WeightedObjectiveState> {
    check_shapes(beta, sample, weights)?;
    let mut residuals = sample.log_y().clone();
    residuals.gemv(-1.0, sample.x(), beta, 1.0);
    let objective = residuals
        .iter()
        .zip(weights)
        .map(|(&e, &w)| w * value(tau, e))
        .sum();
    Ok(WeightedObjectiveState {
        residuals,
        case_weights: weights.to_vec(),
        objective,
    })
}

/// Analytic gradient of [`objective`] in `beta`:
/// `sum_i w_i g(tau, e_i) x_i` with `e_i = ln y_i - x_i' beta`.
pub fn objective_gradient(
    beta: &DVector<f64>,
    sample: &SurvivalSample,
    weights: &[f64],
    tau: ExpectileIndex,
) -> Result<DVector<f64>> {
    check_shapes(beta, sample, weights)?;
    let mut residuals = sample.log_y().clone();
    residuals.gemv(-1.0, sample.x(), beta, 1.0);
    let scaled = DVector::from_iterator(
        sample.n(),
        residuals
            .iter()
            .zip(weights)
            .map(|(&e, &w)| w * shift_grad(tau, e)),
    );
    let mut grad = DVector::zeros(sample.p());
    grad.gemv_tr(1.0, sample.x(), &scaled, 0.0);
    Ok(grad)
}
