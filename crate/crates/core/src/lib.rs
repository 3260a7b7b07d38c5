//! Expectile regression for right-censored accelerated failure time models.
//!
//! The response is modeled on the log scale, `ln T = x' beta + eps`, with `T`
//! right-censored by an independent time `C`. Censoring is handled by
//! Kaplan-Meier inverse-probability weights; estimation minimizes a weighted
//! asymmetric-quadratic (expectile) loss, optionally with an adaptive LASSO
//! penalty for variable selection. Sandwich and bootstrap covariance
//! estimators and a Monte Carlo study harness round out the pipeline.
//!
//! ```
//! use expaft::{ExpectileIndex, SolverConfig, SurvivalSample, WeightScheme};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
//! let sample = SurvivalSample::new(
//!     vec![1.0, 2.0, 3.0, 4.0],
//!     vec![true, false, true, true],
//!     x,
//! ).unwrap();
//! let (_, weights) = WeightScheme::default().weights(&sample).unwrap();
//! let fit = expaft::fit_censored_expectile(
//!     &sample,
//!     ExpectileIndex::symmetric(),
//!     &weights,
//!     &SolverConfig::default(),
//!     None,
//! ).unwrap();
//! assert!(fit.converged);
//! ```

pub mod alasso;
pub mod error;
pub mod inference;
pub mod km;
pub mod loss;
pub mod sample;
pub mod sim;
pub mod solver;

pub use alasso::{
    adaptive_weights, default_lambda, fit_censored_alasso, kkt_max_violation, two_stage_fit,
    PenalizedFitResult, PenaltySpec, TwoStageFit,
};
pub use error::{Error, Result};
pub use inference::{
    bootstrap_covariance, confidence_intervals, penalty_bias_term, plug_in_covariance,
    AsymptoticPieces, CovarianceEstimate, SeMethod,
};
pub use km::{IpcwWeights, KaplanMeierCurve, KmConvention, Side, WeightScheme};
pub use loss::{ExpectileIndex, WeightedObjectiveState};
pub use sample::SurvivalSample;
pub use sim::{
    calibrate_censoring_bound, centering_tau, derive_seed, generate_dataset, run_study,
    CovariateSpec, DataGenConfig, ErrorDist, InterceptMode, LambdaRule, LatentRecord, Method,
    MethodReport, StudyConfig, StudyReport, TrueModel,
};
pub use solver::{fit_censored_expectile, fit_tau_path, FitResult, SolverConfig};
