//! Seeded random streams and circularly-symmetric complex Gaussian sampling.
//!
//! All Monte Carlo entry points take explicit seeds; streams are ChaCha8 so
//! results are reproducible across platforms and releases. Normal variates
//! are generated by a self-contained Box-Muller transform rather than an
//! external distribution crate, which keeps the exact output stream part of
//! this crate's contract.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::C64;

/// Deterministic stream for a seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent shard seed from a base seed (SplitMix64 finalizer).
pub fn shard_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Standard real normal via Box-Muller; one uniform pair per sample.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Standard circularly-symmetric complex normal CN(0, 1):
/// real and imaginary parts are independent N(0, 1/2).
pub fn complex_standard_normal(rng: &mut ChaCha8Rng) -> C64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    C64::new(r * th.cos(), r * th.sin())
}

/// Vector of iid CN(0, 1) entries.
pub fn complex_standard_vector(k: usize, rng: &mut ChaCha8Rng) -> DVector<C64> {
    DVector::from_fn(k, |_, _| complex_standard_normal(rng))
}

/// Draws CN(0, Omega) given a factor `F` with `F F^H = Omega`
/// (see [`crate::linalg::HermitianMatrix::psd_factor`]).
pub fn complex_normal_with_factor(factor: &DMatrix<C64>, rng: &mut ChaCha8Rng) -> DVector<C64> {
    let w = complex_standard_vector(factor.ncols(), rng);
    factor * w
}
