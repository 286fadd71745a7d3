//! Deterministic simulation of quantum position verification in one
//! spatial dimension: an honest run, colluding adversaries, and a Monte Carlo
//! estimate of the detection rate.

pub mod adversary;
pub mod analysis;
pub mod error;
pub mod oracle;
pub mod protocol;
pub mod quantum;
pub mod seed;
pub mod spacetime;

pub use error::{Error, Result};
