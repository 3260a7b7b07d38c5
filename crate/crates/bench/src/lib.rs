//! Shared fixtures for the pipeline benchmarks.

use expaft::{generate_dataset, DataGenConfig, ErrorDist, SurvivalSample, TrueModel};

/// A reproducible censored dataset on the sparse design.
pub fn fixture(n: usize, p: usize, seed: u64) -> (SurvivalSample, TrueModel) {
    let model = TrueModel::sparse_default(p).expect("p >= 5");
    // Bound picked to land near a 25% censoring rate on this design.
    let config = DataGenConfig::standard(n, p, ErrorDist::Gumbel, 21.0, seed);
    let (sample, _) = generate_dataset(&config, &model).expect("valid config");
    (sample, model)
}
