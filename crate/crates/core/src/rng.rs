//! Seeded random streams.
//!
//! Every independent unit of work (grid cell, replication) gets its own
//! ChaCha stream keyed by `(seed, stream)`, so results never depend on the
//! order in which a thread pool schedules them.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Failures before the first success at probability `p`, drawn by
/// inversion so that probabilities far below machine epsilon stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricSkip {
    ln_q: f64,
}

impl GeometricSkip {
    /// `None` unless `0 < p <= 1`.
    pub fn new(p: f64) -> Option<Self> {
        (p > 0.0 && p <= 1.0).then(|| GeometricSkip { ln_q: (-p).ln_1p() })
    }

    pub fn sample(&self, rng: &mut Rng) -> u64 {
        if self.ln_q == f64::NEG_INFINITY {
            return 0;
        }
        let u = 1.0 - rng.random::<f64>();
        let k = (u.ln() / self.ln_q).floor();
        if k >= u64::MAX as f64 {
            u64::MAX
        } else {
            k as u64
        }
    }
}
