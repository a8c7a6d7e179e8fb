//! Collision-inclusive capacity for homogeneous autonomous traffic.
//!
//! The crate runs from a noise-perturbed IDM follower up to the macroscopic
//! capacity that accounts for the time a segment spends blocked by
//! collisions, plus the headway/speed optimizers and the Monte Carlo
//! simulators used to check the closed forms.

pub mod analytics;
pub mod error;
pub mod extensions;
pub mod fmt;
pub mod gauss;
pub mod ingest;
pub mod optimize;
pub mod quad;
pub mod rng;
pub mod roots;
pub mod simcore;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};

/// km/h to m/s.
pub fn kmh(v: f64) -> f64 {
    v / 3.6
}
