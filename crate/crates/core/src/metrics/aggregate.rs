use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{compression_ratio, feature_count, image_entropy};
use crate::data::{dataset_statistics, TrajectoryDataset, FRAME_PIXELS, FRAME_SIDE};
use crate::env::GameSpec;
use crate::seed::rng_for;
use crate::{Error, Result};

/// Exact header of `metrics.csv`.
pub const METRICS_HEADER: &str =
    "game,num_actions,avg_traj_len,avg_steps_first_reward,image_entropy,compression_ratio,feature_count";

/// One row of per-game characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameMetrics {
    pub game: String,
    pub num_actions: usize,
    pub avg_traj_len: f64,
    pub avg_steps_first_reward: f64,
    /// Bits.
    pub image_entropy: f64,
    pub compression_ratio: f64,
    /// Mean keypoints per frame.
    pub feature_count: f64,
}

impl GameMetrics {
    /// The six numeric features in column order.
    pub fn features(&self) -> [f64; 6] {
        [
            self.num_actions as f64,
            self.avg_traj_len,
            self.avg_steps_first_reward,
            self.image_entropy,
            self.compression_ratio,
            self.feature_count,
        ]
    }

    pub const FEATURE_NAMES: [&'static str; 6] = [
        "num_actions",
        "avg_traj_len",
        "avg_steps_first_reward",
        "image_entropy",
        "compression_ratio",
        "feature_count",
    ];
}

/// Metrics over a seeded uniform sample of `min(n_frames, total)` single
/// frames; the statistics columns come from the whole dataset.
pub fn aggregate_metrics(dataset: &TrajectoryDataset, n_frames: usize, seed: u64) -> Result<GameMetrics> {
    if n_frames == 0 {
        return Err(Error::InvalidArgument("n_frames must be ≥ 1".into()));
    }
    let stats = dataset_statistics(dataset);
    let avg_steps_first_reward = stats.avg_steps_first_reward.ok_or_else(|| {
        Error::Undefined(format!(
            "{}: every episode is reward-free, steps to first reward is undefined",
            dataset.game_name()
        ))
    })?;
    let total = dataset.total_transitions();
    let take = n_frames.min(total);
    let mut picked = index::sample(&mut rng_for(seed, 0xF4A3), total, take).into_vec();
    picked.sort_unstable();

    // Global frame index -> (episode, t).
    let mut offsets = Vec::with_capacity(dataset.episodes().len());
    let mut acc = 0;
    for ep in dataset.episodes() {
        offsets.push(acc);
        acc += ep.len();
    }
    let (mut entropy, mut ratio, mut features) = (0.0, 0.0, 0.0);
    for g in picked {
        let e = offsets.partition_point(|&o| o <= g) - 1;
        let frame = dataset.episodes()[e].frame(g - offsets[e]);
        debug_assert_eq!(frame.len(), FRAME_PIXELS);
        entropy += image_entropy(frame, FRAME_SIDE, FRAME_SIDE);
        ratio += compression_ratio(frame, FRAME_SIDE, FRAME_SIDE);
        features += feature_count(frame, FRAME_SIDE, FRAME_SIDE) as f64;
    }
    let n = take as f64;
    Ok(GameMetrics {
        game: dataset.game_name().to_string(),
        num_actions: stats.num_actions,
        avg_traj_len: stats.avg_traj_len,
        avg_steps_first_reward,
        image_entropy: entropy / n,
        compression_ratio: ratio / n,
        feature_count: features / n,
    })
}

/// Checks the synthetic suite's knob contracts on generated data: mean
/// entropy must not decrease with `texture_level`, and mean steps to the
/// first reward must not decrease with `reward_sparsity`. Returns one
/// message per violated adjacent pair.
pub fn knob_contract_violations(specs: &[GameSpec], rows: &[GameMetrics]) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |key: &dyn Fn(&GameSpec) -> f64, value: &dyn Fn(&GameMetrics) -> f64, what: &str| {
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by(|&a, &b| key(&specs[a]).total_cmp(&key(&specs[b])));
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if key(&specs[a]) < key(&specs[b]) && value(&rows[b]) < value(&rows[a]) {
                out.push(format!(
                    "{what}: {} ({:.3}) < {} ({:.3})",
                    specs[b].name,
                    value(&rows[b]),
                    specs[a].name,
                    value(&rows[a])
                ));
            }
        }
    };
    check(&|s| s.texture_level, &|m| m.image_entropy, "entropy vs texture_level");
    check(
        &|s| s.reward_sparsity as f64,
        &|m| m.avg_steps_first_reward,
        "steps to first reward vs reward_sparsity",
    );
    out
}
