//! Fixtures shared by the benchmarks.

use prnet_core::seed::{self, complex_normal};
use prnet_core::{ComplexBatch, ExperimentConfig};

/// Desk-scale configuration with a shorter calibration.
pub fn bench_config() -> ExperimentConfig {
    ExperimentConfig { calibration_samples: 200, ..ExperimentConfig::desk_scale() }
}

/// `batch` unit-variance complex Gaussian columns of length `len`.
pub fn gaussian_batch(seed: u64, len: usize, batch: usize) -> ComplexBatch {
    let mut rng = seed::rng(seed);
    let columns: Vec<Vec<_>> = (0..batch).map(|_| (0..len).map(|_| complex_normal(&mut rng)).collect()).collect();
    ComplexBatch::from_columns(len, &columns).expect("columns have the stated length")
}
