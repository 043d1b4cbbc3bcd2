//! Seedable counter-based random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream addressed by
//! `(master seed, repetition, stage)`, so work can be scheduled on any number
//! of threads and still reproduce a serial run exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Scalar;

pub type Stream = ChaCha8Rng;

/// Stage tags used by the design and MFIS drivers.
pub mod stage {
    /// Initial space-filling design.
    pub const INITIAL_DESIGN: u64 = 0xFFFF_FFF0;
    /// Single shared candidate pool (single-candidate-set strategy).
    pub const CANDIDATE_POOL: u64 = 0xFFFF_FFF1;
    /// Hyperparameter restarts are keyed off the design size, offset by this.
    pub const HYPERPARAMETERS: u64 = 0x8000_0000;
    /// Surrogate samples drawn from the nominal distribution.
    pub const MFIS_SURROGATE: u64 = 0xFFFF_FFF2;
    /// Bias-distribution fit.
    pub const MFIS_GMM: u64 = 0xFFFF_FFF3;
    /// High-fidelity samples drawn from the bias distribution.
    pub const MFIS_BIASED: u64 = 0xFFFF_FFF4;
    /// Dense classification test design.
    pub const TEST_SET: u64 = 0xFFFF_FFF5;
    /// Direct Monte Carlo reference runs.
    pub const ORACLE: u64 = 0xFFFF_FFF6;
}

/// Independent stream for `(master, repetition, stage)`. Repetition and stage
/// must each fit in 32 bits.
pub fn substream(master: u64, repetition: u64, stage: u64) -> Stream {
    debug_assert!(repetition <= u32::MAX as u64 && stage <= u32::MAX as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((repetition << 32) | (stage & 0xFFFF_FFFF));
    rng
}

/// Uniform draw on `[0, 1)`.
#[inline]
pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.random();
    // f32 rounding can land exactly on 1
    let v = T::of(u);
    if v < T::one() {
        v
    } else {
        T::one() - T::epsilon()
    }
}

#[inline]
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::of(z)
}
