//! Shared fixtures for the benchmarks.

use sand_core::synthetic::{generate, SynthConfig};
use sand_core::{data::split, SeriesMatrix};

/// Anomaly-free training and test segments with `n` variables.
pub fn fixture(n: usize, t_a: usize, t_b: usize, seed: u64) -> (SeriesMatrix, SeriesMatrix) {
    let (x, _, s) = generate(&SynthConfig::new(n, t_a, t_b, seed)).expect("valid config");
    split(&x, s).expect("valid split")
}
