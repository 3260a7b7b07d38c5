//! Monte Carlo machinery: synthetic data and replicated studies.

pub mod datagen;
pub mod study;

pub use datagen::{
    calibrate_censoring_bound, centering_tau, derive_seed, generate_dataset, CovariateSpec,
    DataGenConfig, ErrorDist, LatentRecord, TrueModel, CALIBRATION_DRAWS,
};
pub use study::{
    run_study, InterceptMode, LambdaRule, Method, MethodReport, StudyConfig, StudyReport,
};
