//! Seeded sampling helpers used by property tests, hit-and-run walks and
//! disturbance realizations. All randomness in the crate flows through a
//! `ChaCha8` generator with an explicit 64-bit seed.

use nalgebra::DVector;
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::{convert, Scalar};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample in `[-1, 1]^d`.
pub fn sample_unit_box<T: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    DVector::from_fn(d, |_, _| convert::<T>(rng.random_range(-1.0..=1.0)))
}

/// Standard-normal sample by Box-Muller (keeps us off extra distribution deps).
pub fn sample_gaussian<T: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    DVector::from_fn(d, |_, _| {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        convert::<T>((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
    })
}

/// Uniformly distributed direction on the unit sphere.
pub fn sample_direction<T: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> DVector<T> {
    loop {
        let v = sample_gaussian::<T>(d, rng);
        let n = v.norm();
        if n > convert(1e-12) {
            return v / n;
        }
    }
}

/// `n` unit directions from a fixed seed.
pub fn unit_directions<T: Scalar>(d: usize, n: usize, seed: u64) -> Vec<DVector<T>> {
    let mut r = rng(seed);
    (0..n).map(|_| sample_direction(d, &mut r)).collect()
}
