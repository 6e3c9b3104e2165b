//! Shared fixtures for the criterion benches.

use ndarray::{Array3, Array4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_volume(dims: [usize; 3], seed: u64) -> Array3<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((dims[0], dims[1], dims[2]), |_| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Network input `[c][s][s][frames]` with entries in [-1, 1).
pub fn random_patch(channels: usize, size: usize, frames: usize, seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn((channels, size, size, frames), |_| rng.gen_range(-1.0..1.0))
}
