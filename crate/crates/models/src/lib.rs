//! Decision Transformer (DT) and Decision Mamba (DM) for offline RL on
//! frame-stack observations, with the reverse-mode autodiff engine they
//! are trained with.
//!
//! * [`graph`]: the tape and its ops; heavy kernels live in [`kernels`].
//! * [`params`]: named tensors and seeded initialization.
//! * [`model`]: token embedding, DT/DM blocks, logits and loss.
//! * [`train`]: AdamW training loop with warmup and cosine decay.
//! * [`checkpoint`]: persisted weights.
//! * [`gradcheck`]: finite-difference verification.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod params;
pub mod scalar;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{Arch, ModelConfig, TrainConfig};
pub use error::{Error, Result};
pub use params::{init_model, ParamStore};
