//! Named parameter tensors and their initialization.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Arch, ModelConfig};
use crate::scalar::Scalar;
use crate::{Error, Result};
use seqrl_core::data::{FRAME_SIDE, STACK};
use seqrl_core::seed::rng_for;

const INIT_STD: f64 = 0.02;

/// Convolutional state encoder: (kernel, stride, output channels).
pub const ENCODER_LAYERS: [(usize, usize, usize); 3] = [(8, 4, 32), (4, 2, 64), (3, 1, 64)];

/// Spatial side and channel count of the last encoder feature map.
pub fn encoder_output() -> (usize, usize) {
    let mut side = FRAME_SIDE;
    let mut channels = STACK;
    for (k, s, c) in ENCODER_LAYERS {
        side = (side - k) / s + 1;
        channels = c;
    }
    (side, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
    /// `ln(n + 1)` along each row of `[E, N]`.
    HippoLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    /// Subject to weight decay.
    pub decay: bool,
}

/// All trainable tensors of one model, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    pub params: Vec<Param<S>>,
}

/// Name, shape, init and decay flag of every parameter of `config`.
pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init, bool)> {
    let d = config.d_model;
    let mut out: Vec<(String, Vec<usize>, Init, bool)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init, decay: bool| out.push((name, shape, init, decay));
    let mut cin = STACK;
    for (i, (k, _, c)) in ENCODER_LAYERS.iter().enumerate() {
        add(format!("encoder.conv{}.w", i + 1), vec![k * k * cin, *c], Init::Normal, true);
        add(format!("encoder.conv{}.b", i + 1), vec![*c], Init::Zeros, false);
        cin = *c;
    }
    let (side, ch) = encoder_output();
    add("encoder.proj.w".into(), vec![side * side * ch, d], Init::Normal, true);
    add("encoder.proj.b".into(), vec![d], Init::Zeros, false);
    add("embed.rtg.w".into(), vec![1, d], Init::Normal, true);
    add("embed.rtg.b".into(), vec![d], Init::Zeros, false);
    add("embed.action".into(), vec![config.action_space_size, d], Init::Normal, false);
    if config.timestep_embedding {
        add("embed.timestep".into(), vec![config.max_timestep, d], Init::Normal, false);
    }
    for l in 0..config.n_layers {
        let p = format!("blocks.{l}.");
        match config.arch {
            Arch::Dt => {
                add(format!("{p}ln1.g"), vec![d], Init::Ones, false);
                add(format!("{p}ln1.b"), vec![d], Init::Zeros, false);
                add(format!("{p}attn.qkv.w"), vec![d, 3 * d], Init::Normal, true);
                add(format!("{p}attn.qkv.b"), vec![3 * d], Init::Zeros, false);
                add(format!("{p}attn.out.w"), vec![d, d], Init::Normal, true);
                add(format!("{p}attn.out.b"), vec![d], Init::Zeros, false);
                add(format!("{p}ln2.g"), vec![d], Init::Ones, false);
                add(format!("{p}ln2.b"), vec![d], Init::Zeros, false);
                add(format!("{p}mlp.fc.w"), vec![d, 4 * d], Init::Normal, true);
                add(format!("{p}mlp.fc.b"), vec![4 * d], Init::Zeros, false);
                add(format!("{p}mlp.proj.w"), vec![4 * d, d], Init::Normal, true);
                add(format!("{p}mlp.proj.b"), vec![d], Init::Zeros, false);
            }
            Arch::Dm => {
                let e = config.inner_width();
                let (n, r) = (config.ssm_state, config.dt_rank());
                add(format!("{p}ln.g"), vec![d], Init::Ones, false);
                add(format!("{p}ln.b"), vec![d], Init::Zeros, false);
                add(format!("{p}in_proj.w"), vec![d, 2 * e], Init::Normal, true);
                add(format!("{p}conv.w"), vec![e, config.conv_kernel], Init::Normal, true);
                add(format!("{p}conv.b"), vec![e], Init::Zeros, false);
                add(format!("{p}x_proj.w"), vec![e, r + 2 * n], Init::Normal, true);
                add(format!("{p}dt_proj.w"), vec![r, e], Init::Normal, true);
                add(format!("{p}dt_proj.b"), vec![e], Init::Zeros, false);
                add(format!("{p}a_log"), vec![e, n], Init::HippoLog, false);
                add(format!("{p}d"), vec![e], Init::Ones, false);
                add(format!("{p}out_proj.w"), vec![e, d], Init::Normal, true);
            }
        }
    }
    add("ln_f.g".into(), vec![d], Init::Ones, false);
    add("ln_f.b".into(), vec![d], Init::Zeros, false);
    add("head.w".into(), vec![d, config.action_space_size], Init::Normal, true);
    out
}

/// Diagonal of the HiPPO-LegT state matrix: `A_nn = -(n + 1)`.
pub fn hippo_legt_diagonal(n: usize) -> Vec<f64> {
    let full = hippo_legt(n);
    (0..n).map(|i| full[i * n + i]).collect()
}

/// The full lower-triangular HiPPO-LegT matrix, row-major `N × N`.
pub fn hippo_legt(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            a[row * n + col] = match row.cmp(&col) {
                std::cmp::Ordering::Greater => -((2 * row + 1) as f64).sqrt() * ((2 * col + 1) as f64).sqrt(),
                std::cmp::Ordering::Equal => -((row + 1) as f64),
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    a
}

/// Seeded initialization: normal(0, 0.02) weights, zero biases, unit
/// norm gains, HiPPO-LegT state diagonal and unit skip for the SSM.
pub fn init_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParamStore<S>> {
    config.validate()?;
    let mut rng = rng_for(seed, 0x1417);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let params = layout(config)
        .into_iter()
        .map(|(name, shape, init, decay)| {
            let len: usize = shape.iter().product();
            let data: Vec<S> = match init {
                Init::Normal => (0..len).map(|_| S::from_f64c(normal.sample(&mut rng))).collect(),
                Init::Zeros => vec![S::zero(); len],
                Init::Ones => vec![S::one(); len],
                Init::HippoLog => {
                    let n = shape[1];
                    let diag = hippo_legt_diagonal(n);
                    (0..len).map(|i| S::from_f64c((-diag[i % n]).ln())).collect()
                }
            };
            Param {
                name,
                shape,
                data,
                decay,
            }
        })
        .collect();
    Ok(ParamStore { params })
}

impl<S: Scalar> ParamStore<S> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| T::from_f64c(v.f64())).collect(),
                    decay: p.decay,
                })
                .collect(),
        }
    }

    /// Checks that names and shapes agree with `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let want = layout(config);
        if want.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, config expects {}",
                self.params.len(),
                want.len()
            )));
        }
        for ((name, shape, _, _), p) in want.iter().zip(&self.params) {
            if *name != p.name || *shape != p.shape || p.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!("tensor {} does not match layout", p.name)));
            }
        }
        Ok(())
    }

    /// Effective state matrix of SSM layer `layer` (`[E, N]`, all negative).
    pub fn ssm_a(&self, layer: usize) -> Option<Vec<f64>> {
        self.get(&format!("blocks.{layer}.a_log"))
            .map(|p| p.data.iter().map(|v| -v.f64().exp()).collect())
    }
}
