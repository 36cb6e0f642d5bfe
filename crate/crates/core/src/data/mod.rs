//! Episodes, return-to-go and dataset-level statistics.

mod batch;
pub mod io;

pub use batch::{all_windows, fill_frame_stack, BatchSampler, SequenceBatch, Window, STACK};

use rand::seq::index;

use crate::actions::canonical_prefix;
use crate::seed::rng_for;
use crate::{Error, Result};

/// Side length of a stored frame.
pub const FRAME_SIDE: usize = 84;
/// Pixels in one 84×84 grayscale frame.
pub const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;

/// Returns-to-go by a single reverse pass: `out[t] = rewards[t] + out[t + 1]`.
pub fn compute_rtg(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyEpisode);
    }
    if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteReward(i));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = if t + 1 == rewards.len() { *r } else { r + acc };
        out[t] = acc;
    }
    Ok(out)
}

/// One recorded episode. Frames are stored singly (not stacked) as a
/// contiguous `len × 84 × 84` row-major block.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    frames: Vec<u8>,
    actions: Vec<u8>,
    rewards: Vec<f32>,
    rtg: Vec<f64>,
}

impl Episode {
    pub fn new(frames: Vec<u8>, actions: Vec<u8>, rewards: Vec<f32>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::EmptyEpisode);
        }
        if rewards.len() != actions.len() || frames.len() != actions.len() * FRAME_PIXELS {
            return Err(Error::Dataset(format!(
                "length mismatch: {} frames bytes, {} actions, {} rewards",
                frames.len(),
                actions.len(),
                rewards.len()
            )));
        }
        let wide: Vec<f64> = rewards.iter().map(|&r| r as f64).collect();
        let rtg = compute_rtg(&wide)?;
        Ok(Self {
            frames,
            actions,
            rewards,
            rtg,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The whole frame block.
    pub fn frames(&self) -> &[u8] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.frames[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }

    pub fn actions(&self) -> &[u8] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f32] {
        &self.rewards
    }

    pub fn rtg(&self) -> &[f64] {
        &self.rtg
    }

    pub fn episode_return(&self) -> f64 {
        self.rtg[0]
    }

    /// 1-based index of the first nonzero reward.
    pub fn steps_to_first_reward(&self) -> Option<usize> {
        self.rewards.iter().position(|&r| r != 0.0).map(|i| i + 1)
    }

    fn with_actions(&self, actions: Vec<u8>) -> Self {
        Self {
            frames: self.frames.clone(),
            actions,
            rewards: self.rewards.clone(),
            rtg: self.rtg.clone(),
        }
    }
}

/// An immutable collection of episodes from one game.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    game_name: String,
    action_space_size: usize,
    action_names: Vec<String>,
    episodes: Vec<Episode>,
    max_return: f64,
}

impl TrajectoryDataset {
    /// Builds a dataset whose actions follow the canonical name prefix.
    pub fn new(game_name: impl Into<String>, action_space_size: usize, episodes: Vec<Episode>) -> Result<Self> {
        let names = canonical_prefix(action_space_size)?;
        Self::with_action_names(game_name, names, episodes)
    }

    /// Builds a dataset with explicit action labels (used for fused spaces).
    pub fn with_action_names(
        game_name: impl Into<String>,
        action_names: Vec<String>,
        episodes: Vec<Episode>,
    ) -> Result<Self> {
        let action_space_size = action_names.len();
        if !(1..=18).contains(&action_space_size) {
            return Err(Error::InvalidArgument(format!(
                "action space size {action_space_size} outside 1..=18"
            )));
        }
        if episodes.is_empty() {
            return Err(Error::Dataset("dataset has no episodes".into()));
        }
        for (e, ep) in episodes.iter().enumerate() {
            if let Some(&a) = ep.actions.iter().find(|&&a| a as usize >= action_space_size) {
                return Err(Error::Dataset(format!(
                    "episode {e}: action {a} outside action space of size {action_space_size}"
                )));
            }
        }
        let max_return = episodes
            .iter()
            .map(Episode::episode_return)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            game_name: game_name.into(),
            action_space_size,
            action_names,
            episodes,
            max_return,
        })
    }

    pub fn game_name(&self) -> &str {
        &self.game_name
    }

    pub fn action_space_size(&self) -> usize {
        self.action_space_size
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn max_return(&self) -> f64 {
        self.max_return
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    /// Uniformly samples `⌈fraction · |episodes|⌉` episodes without
    /// replacement. Selected episodes keep their collection order.
    pub fn sample_fraction(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction {fraction} outside (0, 1]"
            )));
        }
        let n = self.episodes.len();
        let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut rng = rng_for(seed, 0x5A4D_504C);
        let mut picked = index::sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        let episodes = picked.into_iter().map(|i| self.episodes[i].clone()).collect();
        Self::with_action_names(self.game_name.clone(), self.action_names.clone(), episodes)
    }

    /// Replaces every reward by its sign (the DQN-replay clipping convention).
    pub fn with_clipped_rewards(&self) -> Result<Self> {
        let episodes = self
            .episodes
            .iter()
            .map(|ep| {
                let clipped = ep
                    .rewards
                    .iter()
                    .map(|&r| if r == 0.0 { 0.0 } else { r.signum() })
                    .collect();
                Episode::new(ep.frames.clone(), ep.actions.clone(), clipped)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_action_names(self.game_name.clone(), self.action_names.clone(), episodes)
    }

    /// Same frames and rewards with actions replaced episode by episode.
    pub fn with_relabelled_actions(
        &self,
        action_names: Vec<String>,
        relabel: impl Fn(u8) -> Result<u8>,
    ) -> Result<Self> {
        let episodes = self
            .episodes
            .iter()
            .map(|ep| {
                let actions = ep.actions.iter().map(|&a| relabel(a)).collect::<Result<Vec<_>>>()?;
                Ok(ep.with_actions(actions))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_action_names(self.game_name.clone(), action_names, episodes)
    }
}

/// Table-style per-game dataset statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStatistics {
    pub num_actions: usize,
    pub avg_traj_len: f64,
    /// `None` when every episode is reward-free.
    pub avg_steps_first_reward: Option<f64>,
    /// Episodes without any nonzero reward, excluded from the mean above.
    pub reward_free_episodes: usize,
}

pub fn dataset_statistics(dataset: &TrajectoryDataset) -> DatasetStatistics {
    let eps = dataset.episodes();
    let avg_traj_len = eps.iter().map(|e| e.len() as f64).sum::<f64>() / eps.len() as f64;
    let firsts: Vec<usize> = eps.iter().filter_map(Episode::steps_to_first_reward).collect();
    let avg_steps_first_reward = if firsts.is_empty() {
        None
    } else {
        Some(firsts.iter().map(|&s| s as f64).sum::<f64>() / firsts.len() as f64)
    };
    DatasetStatistics {
        num_actions: dataset.action_space_size(),
        avg_traj_len,
        avg_steps_first_reward,
        reward_free_episodes: eps.len() - firsts.len(),
    }
}
