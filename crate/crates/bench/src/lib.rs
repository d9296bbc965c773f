//! Input generators shared by the codec benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use elkc::DenseTensor;

/// Gaussian gradient-like values where only `density` of entries are non-zero.
pub fn sparse_gaussian(n: usize, density: f64, seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 1e-3).expect("valid stddev");
    let data = (0..n)
        .map(|_| {
            let x = normal.sample(&mut rng);
            if rng.random_bool(density) {
                x
            } else {
                0.0
            }
        })
        .collect();
    DenseTensor::from_vec(data).expect("finite samples")
}

pub fn ternary(n: usize, zero_fraction: f64, seed: u64) -> Vec<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.random_bool(zero_fraction) {
                0
            } else if rng.random_bool(0.5) {
                1
            } else {
                -1
            }
        })
        .collect()
}
