//! Evaluation of trained agents.
//!
//! * [`score`]: normalization baselines, normalized scores and the
//!   evaluation target return.
//! * [`outliers`]: median/IQR outlier trimming that keeps at least three
//!   points.
//! * [`rollout`]: return-conditioned autoregressive play.
//! * [`scores`]: per-episode score rows, `scores.csv` and summaries.

pub mod error;
pub mod outliers;
pub mod rollout;
pub mod score;
pub mod scores;

pub use error::{Error, Result};
pub use outliers::remove_outliers;
pub use rollout::{evaluate, rollout, Agent, EvalConfig, Selection, TargetReturn};
pub use score::{expected_return, normalized_score, NormalizationBaseline};
