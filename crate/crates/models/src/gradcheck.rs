//! Central finite differences against reverse-mode gradients.
//!
//! For each parameter tensor the analytic directional derivative `∇L · v`
//! is compared with `(L(θ + h·v) − L(θ − h·v)) / 2h`, where the unit vector
//! `v` follows the sign of the analytic gradient on its largest entries.
//! Central differences are meaningless across a ReLU kink, so when that
//! direction flips any ReLU input the probe is rebuilt greedily from the
//! largest entries whose perturbation flips none.
//!
//! The check point is the seeded initialization plus small Gaussian jitter,
//! so that zero biases and the near-silent SSM path at init do not leave
//! whole groups with vanishing gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::graph::Graph;
use crate::model::{self, Bound};
use crate::params::{init_model, ParamStore};
use crate::scalar::Scalar;
use crate::Result;
use seqrl_core::data::{SequenceBatch, FRAME_PIXELS, STACK};
use seqrl_core::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// Non-zero entries in the probe direction.
    pub entries: usize,
    /// False when every probe tried flipped some ReLU input, so the
    /// difference quotient straddles a kink.
    pub kink_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupCheck> {
        self.groups.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a − b| / max(|a|, |b|)`, zero when both are below `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Entries in a sparse probe direction.
pub const PROBE_ENTRIES: usize = 8;
/// Standard deviation of the jitter added to the initialization.
pub const JITTER: f64 = 0.15;

/// Where the finite-difference losses are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    /// In the same element type as the gradients.
    Native,
    /// In f64 with the f64 step, whatever the gradient type.
    Wide,
}

/// Step size for differences evaluated in `S` under `oracle`.
pub fn default_step<S: Scalar>(oracle: Oracle) -> f64 {
    if std::mem::size_of::<S>() == 4 && oracle == Oracle::Native {
        1e-3
    } else {
        1e-5
    }
}

/// A small random batch with one left-padded slot in its first row.
pub fn random_batch(config: &ModelConfig, batch_size: usize, seed: u64) -> SequenceBatch {
    let mut rng = rng_for(seed, 0x6C4B);
    let k = config.context;
    let mut b = SequenceBatch::padded(batch_size, k);
    for row in 0..batch_size {
        let pad = usize::from(row == 0 && k > 1);
        let t0 = rng.random_range(0..config.max_timestep.saturating_sub(k).max(1));
        for pos in pad..k {
            let i = row * k + pos;
            b.pad_mask[i] = false;
            b.rtg[i] = rng.random_range(0.0..4.0);
            b.actions[i] = rng.random_range(0..config.action_space_size) as u8;
            b.targets[i] = b.actions[i];
            b.timesteps[i] = (t0 + pos - pad) as u32;
            rng.fill(b.state_stack_mut(row, pos));
        }
    }
    debug_assert_eq!(b.states.len(), batch_size * k * STACK * FRAME_PIXELS);
    b
}

struct Probe {
    loss: f64,
    relus: Vec<bool>,
}

fn evaluate<S: Scalar>(store: &ParamStore<S>, config: &ModelConfig, batch: &SequenceBatch, seed: u64) -> Result<Probe> {
    let mut g = Graph::<S>::new();
    let p = Bound::new(&mut g, store, false);
    let mut rng = rng_for(seed, 0xD80F);
    let logits = model::forward(&mut g, &p, config, batch, Some(&mut rng))?;
    let loss = model::loss(&mut g, logits, batch)?;
    Ok(Probe {
        loss: g.scalar(loss).f64(),
        relus: g.relu_pattern(),
    })
}

/// Seeded initialization plus Gaussian noise of std `jitter` on every entry.
pub fn check_point<S: Scalar>(config: &ModelConfig, seed: u64, jitter: f64) -> Result<ParamStore<S>> {
    let mut store = init_model::<S>(config, seed)?;
    let mut rng = rng_for(seed, 0x6C4F);
    let noise = Normal::new(0.0, jitter).map_err(|e| crate::Error::Config(e.to_string()))?;
    for p in &mut store.params {
        for v in &mut p.data {
            *v = S::from_f64c(v.f64() + noise.sample(&mut rng));
        }
    }
    Ok(store)
}

/// Checks every parameter tensor of a tiny model at [`check_point`].
/// Dropout stays active with a fixed mask so it is covered too.
pub fn gradient_check<S: Scalar>(config: &ModelConfig, seed: u64, oracle: Oracle) -> Result<GradCheckReport> {
    let store = check_point::<S>(config, seed, JITTER)?;
    let batch = random_batch(config, 2, seed);
    check_store(&store, config, &batch, seed, default_step::<S>(oracle), oracle)
}

fn order_by_magnitude(grad: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()).then(a.cmp(&b)));
    order
}

/// Largest number of single entries tried when building a sparse probe.
const MAX_TRIES: usize = 32;

pub fn check_store<S: Scalar>(
    store: &ParamStore<S>,
    config: &ModelConfig,
    batch: &SequenceBatch,
    seed: u64,
    h: f64,
    oracle: Oracle,
) -> Result<GradCheckReport> {
    let mut g = Graph::<S>::new();
    let p = Bound::new(&mut g, store, true);
    let mut rng = rng_for(seed, 0xD80F);
    let logits = model::forward(&mut g, &p, config, batch, Some(&mut rng))?;
    let loss = model::loss(&mut g, logits, batch)?;
    g.backward(loss);
    let grads: Vec<Vec<f64>> = p.vars().iter().map(|&v| g.grad(v).iter().map(|x| x.f64()).collect()).collect();
    let wide = oracle == Oracle::Wide || std::mem::size_of::<S>() == 8;
    let floor = if wide { 1e-12 } else { 1e-6 };
    let base = store.cast::<f64>();
    let relus = if wide {
        evaluate(&base, config, batch, seed)?.relus
    } else {
        g.relu_pattern()
    };
    // Central difference along `dir`, or None when it crosses a kink and
    // `strict` is set.
    let central = |i: usize, dir: &[(usize, f64)], strict: bool| -> Result<Option<f64>> {
        let mut out = [0.0; 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut s = base.clone();
            let step = h / (dir.len() as f64).sqrt();
            for &(j, d) in dir {
                s.params[i].data[j] += sign * step * d;
            }
            let probe = if wide {
                evaluate(&s, config, batch, seed)?
            } else {
                evaluate(&s.cast::<S>(), config, batch, seed)?
            };
            if strict && probe.relus != relus {
                return Ok(None);
            }
            out[k] = probe.loss;
        }
        Ok(Some((out[0] - out[1]) / (2.0 * h)))
    };

    let mut groups = Vec::with_capacity(store.len());
    for (i, param) in store.params.iter().enumerate() {
        let gi = &grads[i];
        let sign = |j: usize| if gi[j] < 0.0 { -1.0 } else { 1.0 };
        let order = order_by_magnitude(gi);
        let mut dir: Vec<(usize, f64)> = order.iter().take(PROBE_ENTRIES).map(|&j| (j, sign(j))).collect();
        let mut numeric = central(i, &dir, true)?;
        if numeric.is_none() {
            dir.clear();
            for &j in order.iter().take(MAX_TRIES) {
                dir.push((j, sign(j)));
                match central(i, &dir, true)? {
                    Some(v) => numeric = Some(v),
                    None => {
                        dir.pop();
                    }
                }
                if dir.len() == PROBE_ENTRIES {
                    break;
                }
            }
        }
        let kink_free = numeric.is_some();
        let numeric = match numeric {
            Some(v) => v,
            None => {
                dir = order.iter().take(PROBE_ENTRIES).map(|&j| (j, sign(j))).collect();
                central(i, &dir, false)?.expect("unchecked probe")
            }
        };
        let analytic = dir.iter().map(|&(j, d)| gi[j] * d).sum::<f64>() / (dir.len() as f64).sqrt();
        groups.push(GroupCheck {
            name: param.name.clone(),
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, floor),
            entries: dir.len(),
            kink_free,
        });
    }
    Ok(GradCheckReport { step: h, groups })
}
