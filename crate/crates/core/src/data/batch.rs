use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{TrajectoryDataset, FRAME_PIXELS};
use crate::seed::rng_for;
use crate::{Error, Result};

/// Frames per state stack.
pub const STACK: usize = 4;

/// Writes the stack of frames `t-3..=t` into `out` (`4 × 84 × 84`), repeating
/// frame 0 where the history runs off the start of the episode.
pub fn fill_frame_stack(frames: &[u8], t: usize, out: &mut [u8]) {
    debug_assert_eq!(out.len(), STACK * FRAME_PIXELS);
    for c in 0..STACK {
        let src = (t + c).saturating_sub(STACK - 1);
        out[c * FRAME_PIXELS..(c + 1) * FRAME_PIXELS]
            .copy_from_slice(&frames[src * FRAME_PIXELS..(src + 1) * FRAME_PIXELS]);
    }
}

/// A `[B, K]` block of (return-to-go, state stack, action) triplets.
///
/// Rows are left-padded when the source window is shorter than `K`;
/// `pad_mask[i] == true` marks a padded slot (zero state, action 0,
/// timestep 0), which never contributes to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub batch_size: usize,
    pub context: usize,
    pub rtg: Vec<f64>,
    /// `[B, K, 4, 84, 84]`.
    pub states: Vec<u8>,
    pub actions: Vec<u8>,
    pub timesteps: Vec<u32>,
    pub targets: Vec<u8>,
    pub pad_mask: Vec<bool>,
}

impl SequenceBatch {
    /// An all-padding batch.
    pub fn padded(batch_size: usize, context: usize) -> Self {
        let n = batch_size * context;
        Self {
            batch_size,
            context,
            rtg: vec![0.0; n],
            states: vec![0; n * STACK * FRAME_PIXELS],
            actions: vec![0; n],
            timesteps: vec![0; n],
            targets: vec![0; n],
            pad_mask: vec![true; n],
        }
    }

    pub fn state_stack_mut(&mut self, row: usize, pos: usize) -> &mut [u8] {
        let i = row * self.context + pos;
        &mut self.states[i * STACK * FRAME_PIXELS..(i + 1) * STACK * FRAME_PIXELS]
    }

    pub fn state_stack(&self, row: usize, pos: usize) -> &[u8] {
        let i = row * self.context + pos;
        &self.states[i * STACK * FRAME_PIXELS..(i + 1) * STACK * FRAME_PIXELS]
    }

    /// Fills one row from a window of `dataset`.
    pub fn fill_row(&mut self, row: usize, dataset: &TrajectoryDataset, window: Window) {
        let ep = &dataset.episodes()[window.episode];
        let len = window.len;
        let pad = self.context - len;
        for j in 0..len {
            let t = window.start + j;
            let pos = pad + j;
            let i = row * self.context + pos;
            self.rtg[i] = ep.rtg()[t];
            self.actions[i] = ep.actions()[t];
            self.targets[i] = ep.actions()[t];
            self.timesteps[i] = t as u32;
            self.pad_mask[i] = false;
            fill_frame_stack(ep.frames(), t, self.state_stack_mut(row, pos));
        }
    }

    pub fn from_windows(dataset: &TrajectoryDataset, context: usize, windows: &[Window]) -> Self {
        let mut batch = Self::padded(windows.len(), context);
        for (row, w) in windows.iter().enumerate() {
            batch.fill_row(row, dataset, *w);
        }
        batch
    }

    /// Number of unpadded positions.
    pub fn real_positions(&self) -> usize {
        self.pad_mask.iter().filter(|p| !**p).count()
    }
}

/// A contiguous run of `len ≤ K` triplets of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub episode: usize,
    pub start: usize,
    pub len: usize,
}

/// Every valid window of length `K` (one shorter window per episode that
/// is itself shorter than `K`).
pub fn all_windows(dataset: &TrajectoryDataset, context: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for (e, ep) in dataset.episodes().iter().enumerate() {
        let len = ep.len().min(context);
        for start in 0..=(ep.len() - len) {
            out.push(Window {
                episode: e,
                start,
                len,
            });
        }
    }
    out
}

/// Seeded, infinite stream of batches drawn uniformly over valid windows.
#[derive(Debug, Clone)]
pub struct BatchSampler<'a> {
    dataset: &'a TrajectoryDataset,
    context: usize,
    batch_size: usize,
    windows: Vec<Window>,
    rng: ChaCha8Rng,
}

impl<'a> BatchSampler<'a> {
    pub fn new(dataset: &'a TrajectoryDataset, context: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if context == 0 || batch_size == 0 {
            return Err(Error::InvalidArgument("context and batch size must be ≥ 1".into()));
        }
        Ok(Self {
            dataset,
            context,
            batch_size,
            windows: all_windows(dataset, context),
            rng: rng_for(seed, 0xBA7C),
        })
    }

    /// Number of distinct windows, which is also the number of samples
    /// that make up one epoch.
    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    pub fn next_windows(&mut self) -> Vec<Window> {
        (0..self.batch_size)
            .map(|_| self.windows[self.rng.random_range(0..self.windows.len())])
            .collect()
    }
}

impl Iterator for BatchSampler<'_> {
    type Item = SequenceBatch;

    fn next(&mut self) -> Option<SequenceBatch> {
        let windows = self.next_windows();
        Some(SequenceBatch::from_windows(self.dataset, self.context, &windows))
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::episode;
    use super::*;

    #[test]
    fn short_episode_is_left_padded() {
        let ds = TrajectoryDataset::new("g", 4, vec![episode(&[0, 1, 2, 3, 0], &[0.0; 5])]).unwrap();
        let windows = all_windows(&ds, 10);
        assert_eq!(windows.len(), 1);
        let b = SequenceBatch::from_windows(&ds, 10, &windows);
        assert_eq!(b.pad_mask, [vec![true; 5], vec![false; 5]].concat());
        assert_eq!(&b.timesteps[5..], &[0, 1, 2, 3, 4]);
        assert_eq!(&b.targets[5..], &[0, 1, 2, 3, 0]);
        // Stack at t=1 is frames [0,0,0,1].
        let s = b.state_stack(0, 6);
        let firsts: Vec<u8> = (0..STACK).map(|c| s[c * FRAME_PIXELS]).collect();
        assert_eq!(firsts, [0, 0, 0, 1]);
        let s = b.state_stack(0, 9);
        let firsts: Vec<u8> = (0..STACK).map(|c| s[c * FRAME_PIXELS]).collect();
        assert_eq!(firsts, [1, 2, 3, 4]);
    }

    #[test]
    fn batch_shape_and_determinism() {
        let eps = (0..3).map(|_| episode(&[1; 40], &[0.5; 40])).collect();
        let ds = TrajectoryDataset::new("g", 4, eps).unwrap();
        let mut a = BatchSampler::new(&ds, 30, 256, 9).unwrap();
        let mut b = BatchSampler::new(&ds, 30, 256, 9).unwrap();
        let x = a.next().unwrap();
        assert_eq!(x.states.len(), 256 * 30 * 4 * 84 * 84);
        assert_eq!(x, b.next().unwrap());
        assert_eq!(a.next_windows(), b.next_windows());
        assert_eq!(a.window_count(), 3 * 11);
        for row in 0..x.batch_size {
            let ts = &x.timesteps[row * 30..(row + 1) * 30];
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
