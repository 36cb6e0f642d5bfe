//! Data plumbing for the sequence-modelling RL lab.
//!
//! * [`data`]: episodes, return-to-go, dataset sampling, batching and the
//!   on-disk trajectory container.
//! * [`env`]: a deterministic synthetic game family standing in for Atari.
//! * [`metrics`]: visual-complexity metrics and per-game characteristic rows.
//! * [`fusion`]: fused action spaces, relabelling and defusing.

pub mod actions;
pub mod data;
pub mod env;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod seed;

pub use error::{Error, Result};
