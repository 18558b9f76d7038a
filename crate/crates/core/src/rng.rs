//! Seed derivation and the random primitives every module shares.
//!
//! A single `u64` seed fans out into independent ChaCha8 streams through a
//! counter-style derivation: the stream for `(seed, a, b, ...)` depends only
//! on those numbers, never on how many other streams were created before it.
//! That is what lets environments, subcarriers and sample blocks run in any
//! order (or on any number of workers) and still reproduce bit for bit.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

pub type SimRng = ChaCha8Rng;

/// Stream labels used across the crate so two subsystems never collide.
pub mod label {
    pub const ENVIRONMENT: u64 = 1;
    pub const TRAINING_MODES: u64 = 2;
    pub const FEEDBACK_NOISE: u64 = 3;
    pub const TRANSMISSION: u64 = 4;
    pub const NULL_SPACE: u64 = 5;
    pub const CHAIN_BLOCK: u64 = 6;
    pub const PATTERN: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const ATTACK: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of stream indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x6A09_E667_F3BC_C909))))
}

/// Independent generator for `(seed, path...)`.
pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Rayleigh variate with scale `sigma` (mode at `sigma`).
pub fn rayleigh<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let u: f64 = rng.random();
    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
}

pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 * PI
}

/// `count` distinct indices drawn uniformly from `0..total`, in draw order.
/// Partial Fisher-Yates; panics if `count > total`.
pub fn sample_distinct<R: Rng + ?Sized>(rng: &mut R, count: usize, total: usize) -> alloc::vec::Vec<usize> {
    assert!(count <= total);
    let mut pool: alloc::vec::Vec<usize> = (0..total).collect();
    for i in 0..count {
        let j = rng.random_range(i..total);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}
