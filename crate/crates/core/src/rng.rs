//! Deterministic random streams.
//!
//! Every Monte-Carlo unit (a drop, or a trial inside a drop) owns a ChaCha
//! stream derived from the master seed and its coordinates, so results do not
//! depend on the order in which trials are executed.

use std::f64::consts::FRAC_1_SQRT_2;

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Purpose of a stream. Separate purposes never share random words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamTag {
    /// Angle-of-arrival draws for a drop.
    Scenario = 1,
    /// Channel vectors and estimation-snapshot noise of a trial.
    Fading = 2,
    /// Pilot snapshots feeding the sample covariances of a trial.
    Covariance = 3,
    /// Sample matrices used to fit the viaQ weight.
    Calibration = 4,
}

const MAX_DROPS: u64 = 1 << 24;
const MAX_TRIALS: u64 = 1 << 32;

/// Stream for `(seed, tag, drop, trial)`.
pub fn stream(seed: u64, tag: StreamTag, drop: u64, trial: u64) -> SimRng {
    assert!(drop < MAX_DROPS, "drop index {drop} too large");
    assert!(trial < MAX_TRIALS, "trial index {trial} too large");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 56) | (drop << 32) | trial);
    rng
}

/// Standard circularly-symmetric complex Gaussian, `E|z|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}
