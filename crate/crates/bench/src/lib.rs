//! Shared fixtures for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svann_core::GeoPoint;

/// `n` points uniform over `[0, side)²` with ids `0..n`.
pub fn uniform_points(n: usize, side: f64, seed: u64) -> Vec<(GeoPoint, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64).map(|id| (GeoPoint { x: rng.random_range(0.0..side), y: rng.random_range(0.0..side) }, id)).collect()
}
