//! Kaplan-Meier product-limit curves and inverse-probability-of-censoring
//! weights.
//!
//! The curve is fitted from the ranked sample: observation with rank `R`
//! contributes the factor `((n - R) / (n - R + 1))^e`, where the exponent `e`
//! selects which observations count as "drops". Under
//! [`KmConvention::CensoringSurvival`] the drops are the censored rows, so the
//! curve estimates the censoring survival function; under
//! [`KmConvention::EventSurvival`] the drops are the events. Tied times rank
//! events before censorings, then by input index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::SurvivalSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KmConvention {
    /// Drops at censored observations (exponent `1 - delta`).
    #[default]
    CensoringSurvival,
    /// Drops at events (exponent `delta`). Kept for sensitivity studies:
    /// paired with right evaluation it reproduces some published summary
    /// statistics better than the default.
    EventSurvival,
}

/// Evaluation side for a step function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Right-continuous value at `t`.
    Right,
    /// Left limit at `t` (the value just before the jump).
    #[default]
    LeftLimit,
}

/// A right-continuous step function starting at 1, nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    convention: KmConvention,
    max_followup: Option<f64>,
}

impl KaplanMeierCurve {
    pub fn fit(sample: &SurvivalSample, convention: KmConvention) -> Result<Self> {
        let n = sample.n();
        let y = sample.y();
        let delta = sample.delta();

        // ties: events before censorings, then input order
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            y[a].partial_cmp(&y[b])
                .expect("times are finite")
                .then(delta[b].cmp(&delta[a]))
                .then(a.cmp(&b))
        });

        let mut jump_times = Vec::new();
        let mut values = Vec::new();
        let mut surv = 1.0;
        let mut k = 0usize;
        while k < n {
            let t = y[order[k]];
            let mut dropped = false;
            while k < n && y[order[k]] == t {
                let rank = k + 1;
                let is_drop = match convention {
                    KmConvention::CensoringSurvival => !delta[order[k]],
                    KmConvention::EventSurvival => delta[order[k]],
                };
                if is_drop {
                    surv *= (n - rank) as f64 / (n - rank + 1) as f64;
                    dropped = true;
                }
                k += 1;
            }
            if dropped {
                jump_times.push(t);
                values.push(surv);
            }
        }
        Ok(Self {
            jump_times,
            values,
            convention,
            max_followup: None,
        })
    }

    /// Truncates the curve at `b`: jumps beyond `b` are discarded and every
    /// evaluation is capped at `b`.
    pub fn truncated(mut self, b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidParameter {
                name: "max_followup",
                value: b,
                constraint: "must be positive and finite",
            });
        }
        let keep = self.jump_times.partition_point(|&t| t <= b);
        self.jump_times.truncate(keep);
        self.values.truncate(keep);
        self.max_followup = Some(b);
        Ok(self)
    }

    /// Survival value at `t`, from the requested side.
    pub fn evaluate(&self, t: f64, side: Side) -> f64 {
        let t = match self.max_followup {
            Some(b) if t > b => b,
            _ => t,
        };
        let k = match side {
            Side::Right => self.jump_times.partition_point(|&s| s <= t),
            Side::LeftLimit => self.jump_times.partition_point(|&s| s < t),
        };
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// `-ln` of the right-continuous survival value at `t`.
    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        let g = self.evaluate(t, Side::Right);
        if g <= 0.0 {
            return Err(Error::HazardDiverges { t });
        }
        Ok(-g.ln())
    }

    /// Per-jump increments of the cumulative hazard, with survival values
    /// floored before taking logs so a terminal drop to zero stays finite.
    pub fn hazard_increments(&self, floor: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.jump_times.len());
        let mut prev = 1.0f64;
        for (&t, &v) in self.jump_times.iter().zip(&self.values) {
            let d = prev.max(floor).ln() - v.max(floor).ln();
            out.push((t, d));
            prev = v;
        }
        out
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn convention(&self) -> KmConvention {
        self.convention
    }

    pub fn max_followup(&self) -> Option<f64> {
        self.max_followup
    }
}

/// Per-observation weights `delta_i / max(G(y_i), floor)` for the censoring
/// survival curve `G` evaluated on the configured side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcwWeights {
    w: Vec<f64>,
    floor: f64,
    max_followup: Option<f64>,
}

impl IpcwWeights {
    pub fn from_curve(
        sample: &SurvivalSample,
        curve: &KaplanMeierCurve,
        floor: f64,
        side: Side,
    ) -> Result<Self> {
        check_floor(floor)?;
        let w = sample
            .y()
            .iter()
            .zip(sample.delta())
            .map(|(&yi, &di)| {
                if di {
                    1.0 / curve.evaluate(yi, side).max(floor)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            w,
            floor,
            max_followup: curve.max_followup(),
        })
    }

    /// Unit weights, the uncensored special case.
    pub fn uniform(n: usize) -> Self {
        Self {
            w: vec![1.0; n],
            floor: 0.01,
            max_followup: None,
        }
    }

    /// Wraps externally computed weights (tests, custom schemes).
    pub fn from_raw(w: Vec<f64>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        if let Some(&bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter {
                name: "weights",
                value: bad,
                constraint: "must be finite and nonnegative",
            });
        }
        Ok(Self {
            w,
            floor,
            max_followup: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn positive_count(&self) -> usize {
        self.w.iter().filter(|w| **w > 0.0).count()
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor.is_finite() && floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidParameter {
            name: "floor",
            value: floor,
            constraint: "must lie strictly inside (0, 1)",
        });
    }
    Ok(())
}

/// The weighting pipeline configuration: one call fits the censoring curve
/// and derives the per-observation weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub convention: KmConvention,
    pub floor: f64,
    pub side: Side,
    pub max_followup: Option<f64>,
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self {
            convention: KmConvention::CensoringSurvival,
            floor: 0.01,
            side: Side::LeftLimit,
            max_followup: None,
        }
    }
}

impl WeightScheme {
    pub fn weights(&self, sample: &SurvivalSample) -> Result<(KaplanMeierCurve, IpcwWeights)> {
        let mut curve = KaplanMeierCurve::fit(sample, self.convention)?;
        if let Some(b) = self.max_followup {
            curve = curve.truncated(b)?;
        }
        let w = IpcwWeights::from_curve(sample, &curve, self.floor, self.side)?;
        Ok((curve, w))
    }
}
