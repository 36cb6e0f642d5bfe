//! Offline training: AdamW, warmup + cosine schedule, clipping.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::graph::Graph;
use crate::model::{self, Bound};
use crate::params::{init_model, ParamStore};
use crate::{Error, Result};
use seqrl_core::data::{all_windows, BatchSampler, SequenceBatch, TrajectoryDataset};
use seqrl_core::seed::rng_for;

/// Linear warmup over `warmup_tokens`, then cosine decay towards 10% of
/// the peak, reached at `final_tokens`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_tokens: u64,
    pub final_tokens: u64,
}

impl LrSchedule {
    pub fn at(&self, tokens: u64) -> f64 {
        if tokens < self.warmup_tokens {
            return self.peak * tokens as f64 / self.warmup_tokens.max(1) as f64;
        }
        let span = self.final_tokens.saturating_sub(self.warmup_tokens).max(1) as f64;
        let progress = ((tokens - self.warmup_tokens) as f64 / span).min(1.0);
        self.peak * (0.5 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.1)
    }
}

/// AdamW with decoupled weight decay on the parameters flagged `decay`.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

impl AdamW {
    pub fn new(store: &ParamStore<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = store.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<f32>, grads: &[Vec<f32>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = cfg.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = (lr / c1) as f32;
        let (b1, b2, eps) = (b1 as f32, b2 as f32, cfg.eps as f32);
        let c2_sqrt = c2.sqrt() as f32;
        let shrink = (1.0 - lr * cfg.weight_decay) as f32;
        for (i, p) in store.params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                if p.decay {
                    p.data[j] *= shrink;
                }
                let g = grads[i][j];
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                p.data[j] -= step * m[j] / (v[j].sqrt() / c2_sqrt + eps);
            }
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f32>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = (max_norm / (norm + 1e-6)) as f32;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub log: Vec<LossRecord>,
    pub steps_per_epoch: usize,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().map(|r| r.loss)
    }

    /// Mean loss of each epoch.
    pub fn epoch_losses(&self) -> Vec<f64> {
        let epochs = self.log.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let xs: Vec<f64> = self.log.iter().filter(|r| r.epoch == e).map(|r| r.loss).collect();
                xs.iter().sum::<f64>() / xs.len().max(1) as f64
            })
            .collect()
    }
}

/// One forward/backward pass. Returns the loss and one gradient per
/// parameter tensor.
pub fn loss_and_grads(
    store: &ParamStore<f32>,
    config: &ModelConfig,
    batch: &SequenceBatch,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let mut g = Graph::<f32>::new();
    let p = Bound::new(&mut g, store, true);
    let logits = model::forward(&mut g, &p, config, batch, dropout_rng)?;
    let loss = model::loss(&mut g, logits, batch)?;
    let value = g.scalar(loss) as f64;
    g.backward(loss);
    Ok((value, p.vars().iter().map(|&v| g.grad(v)).collect()))
}

/// Trains from a fresh seeded initialization. `on_epoch` sees the epoch
/// index and its mean loss.
pub fn train(
    config: &ModelConfig,
    tc: &TrainConfig,
    dataset: &TrajectoryDataset,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    tc.validate()?;
    if dataset.action_space_size() != config.action_space_size {
        return Err(Error::Config(format!(
            "dataset has {} actions, model expects {}",
            dataset.action_space_size(),
            config.action_space_size
        )));
    }
    let mut store = init_model::<f32>(config, tc.seed)?;
    let mut opt = AdamW::new(&store);
    let mut sampler = BatchSampler::new(dataset, config.context, tc.batch_size, tc.seed)?;
    let mut dropout_rng = rng_for(tc.seed, 0xD80F);
    let steps_per_epoch = sampler.window_count().div_ceil(tc.batch_size);
    let schedule = LrSchedule {
        peak: tc.lr,
        warmup_tokens: tc.warmup_tokens,
        final_tokens: (tc.max_epochs * steps_per_epoch * tc.batch_size * config.context) as u64,
    };
    let mut tokens = 0u64;
    let mut log = Vec::with_capacity(tc.max_epochs * steps_per_epoch);
    for epoch in 0..tc.max_epochs {
        let mut sum = 0.0;
        for step in 0..steps_per_epoch {
            let batch = sampler.next().expect("sampler is infinite");
            let (loss, mut grads) = loss_and_grads(&store, config, &batch, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, loss });
            }
            clip_global_norm(&mut grads, tc.grad_clip);
            tokens += batch.real_positions() as u64;
            let lr = schedule.at(tokens);
            opt.step(&mut store, &grads, lr, tc);
            log.push(LossRecord { epoch, step, loss, lr });
            sum += loss;
        }
        let mean = sum / steps_per_epoch as f64;
        log::info!("epoch {epoch}: mean loss {mean:.5}");
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome {
        params: store,
        log,
        steps_per_epoch,
    })
}

/// Next-action accuracy over every window of `dataset`, dropout off.
pub fn dataset_accuracy(
    store: &ParamStore<f32>,
    config: &ModelConfig,
    dataset: &TrajectoryDataset,
    batch_size: usize,
) -> Result<f64> {
    let windows = all_windows(dataset, config.context);
    let (mut hits, mut total) = (0, 0);
    for chunk in windows.chunks(batch_size.max(1)) {
        let batch = SequenceBatch::from_windows(dataset, config.context, chunk);
        let logits = model::predict(store, config, &batch)?;
        let (h, t) = model::accuracy(&logits, &batch, config.action_space_size);
        hits += h;
        total += t;
    }
    Ok(hits as f64 / total.max(1) as f64)
}

/// Loss log as CSV with header `epoch,step,loss,lr`.
pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("epoch,step,loss,lr\n");
    for r in log {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.step, r.loss, r.lr));
    }
    out
}
