//! Right-censored survival samples on the log scale.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A right-censored sample: follow-up times `y`, event indicators `delta`
/// (`true` = event observed, `false` = censored) and an n-by-p covariate
/// matrix. Times must be strictly positive; regression is done on `ln y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSample {
    y: Vec<f64>,
    delta: Vec<bool>,
    x: DMatrix<f64>,
    log_y: DVector<f64>,
    has_intercept: bool,
}

impl SurvivalSample {
    pub fn new(y: Vec<f64>, delta: Vec<bool>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if delta.len() != n {
            return Err(Error::DimensionMismatch {
                what: "delta",
                expected: n,
                actual: delta.len(),
            });
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: n,
                actual: x.nrows(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::RankDeficient {
                detail: "covariate matrix has zero columns".into(),
            });
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() || yi <= 0.0 {
                return Err(Error::InvalidObservation {
                    index: i,
                    reason: format!("time {yi} is not strictly positive and finite"),
                });
            }
        }
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                index: bad % n,
                reason: "non-finite covariate value".into(),
            });
        }
        let log_y = DVector::from_iterator(n, y.iter().map(|v| v.ln()));
        Ok(Self {
            y,
            delta,
            x,
            log_y,
            has_intercept: false,
        })
    }

    /// Builds a sample from covariate rows (row i = covariates of observation i).
    pub fn from_rows(y: Vec<f64>, delta: Vec<bool>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = y.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                what: "covariate rows",
                expected: n,
                actual: rows.len(),
            });
        }
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::RankDeficient {
                detail: "ragged covariate rows".into(),
            });
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(y, delta, x)
    }

    /// Returns a copy with a leading all-ones column, marking an intercept fit.
    pub fn with_intercept(&self) -> Self {
        let n = self.n();
        let p = self.p();
        let mut x = DMatrix::zeros(n, p + 1);
        x.column_mut(0).fill(1.0);
        x.view_mut((0, 1), (n, p)).copy_from(&self.x);
        Self {
            y: self.y.clone(),
            delta: self.delta.clone(),
            x,
            log_y: self.log_y.clone(),
            has_intercept: true,
        }
    }

    /// Keeps only the given covariate columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::RankDeficient {
                detail: "no columns selected".into(),
            });
        }
        for &c in cols {
            if c >= self.p() {
                return Err(Error::DimensionMismatch {
                    what: "column index",
                    expected: self.p(),
                    actual: c,
                });
            }
        }
        let x = DMatrix::from_fn(self.n(), cols.len(), |i, j| self.x[(i, cols[j])]);
        Ok(Self {
            y: self.y.clone(),
            delta: self.delta.clone(),
            x,
            log_y: self.log_y.clone(),
            has_intercept: self.has_intercept && cols.first() == Some(&0),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn log_y(&self) -> &DVector<f64> {
        &self.log_y
    }

    /// Whether column 0 is a fitted intercept column.
    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn censored_fraction(&self) -> f64 {
        let c = self.delta.iter().filter(|d| !**d).count();
        c as f64 / self.n() as f64
    }

    /// Draws rows `idx` (with repetitions allowed) into a new sample.
    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptySample);
        }
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let delta = idx.iter().map(|&i| self.delta[i]).collect();
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let mut s = Self::new(y, delta, x)?;
        s.has_intercept = self.has_intercept;
        Ok(s)
    }
}
