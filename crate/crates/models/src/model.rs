//! Forward pass shared by both architectures.
//!
//! Tokens are laid out per timestep as (return-to-go, state, action); the
//! action logits for timestep `t` are read from the state token at
//! position `3t + 1`, which has not yet seen `a_t`.

use rand_chacha::ChaCha8Rng;

use crate::config::{Arch, ModelConfig};
use crate::graph::{Graph, Var};
use crate::kernels::scan;
use crate::params::{encoder_output, ParamStore, ENCODER_LAYERS};
use crate::scalar::Scalar;
use crate::{Error, Result};
use seqrl_core::data::{SequenceBatch, FRAME_SIDE, STACK};

const LN_EPS: f64 = 1e-5;

/// Parameter tensors placed on a graph.
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// Puts every tensor of `store` on `graph`, as trainable leaves when
    /// `trainable`, as constants otherwise.
    pub fn new<S: Scalar>(graph: &mut Graph<S>, store: &ParamStore<S>, trainable: bool) -> Self {
        let vars = store
            .params
            .iter()
            .map(|p| {
                if trainable {
                    graph.param(&p.shape, p.data.clone())
                } else {
                    graph.constant(&p.shape, p.data.clone())
                }
            })
            .collect();
        Self {
            names: store.params.iter().map(|p| p.name.clone()).collect(),
            vars,
        }
    }

    pub fn get(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Per-call settings shared by the blocks.
pub struct Pass<'r> {
    pub batch: usize,
    pub steps: usize,
    pub dropout: f64,
    pub rng: Option<&'r mut ChaCha8Rng>,
}

impl Pass<'_> {
    fn dropout<S: Scalar>(&mut self, g: &mut Graph<S>, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.dropout > 0.0 => g.dropout(x, self.dropout, rng),
            _ => x,
        }
    }
}

/// Pre-norm transformer block: attention then a 4× GELU MLP, each with a
/// residual connection.
pub fn dt_block<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    layer: usize,
    x: Var,
    heads: usize,
    key_pad: Option<&[bool]>,
    pass: &mut Pass,
) -> Result<Var> {
    let name = |s: &str| format!("blocks.{layer}.{s}");
    let seq = 3 * pass.steps;
    let h = g.layer_norm(x, p.get(&name("ln1.g")), p.get(&name("ln1.b")), LN_EPS)?;
    let qkv = g.linear(h, p.get(&name("attn.qkv.w")), Some(p.get(&name("attn.qkv.b"))))?;
    let att = g.attention(qkv, pass.batch, seq, heads, key_pad)?;
    let att = g.linear(att, p.get(&name("attn.out.w")), Some(p.get(&name("attn.out.b"))))?;
    let att = pass.dropout(g, att);
    let x = g.add(x, att)?;
    let h = g.layer_norm(x, p.get(&name("ln2.g")), p.get(&name("ln2.b")), LN_EPS)?;
    let h = g.linear(h, p.get(&name("mlp.fc.w")), Some(p.get(&name("mlp.fc.b"))))?;
    let h = g.gelu(h);
    let h = g.linear(h, p.get(&name("mlp.proj.w")), Some(p.get(&name("mlp.proj.b"))))?;
    let h = pass.dropout(g, h);
    g.add(x, h)
}

/// Pre-norm gated selective-SSM block with a residual connection.
pub fn dm_block<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    layer: usize,
    x: Var,
    config: &ModelConfig,
    pass: &mut Pass,
) -> Result<Var> {
    let name = |s: &str| format!("blocks.{layer}.{s}");
    let (e, n, r) = (config.inner_width(), config.ssm_state, config.dt_rank());
    let seq = 3 * pass.steps;
    let h = g.layer_norm(x, p.get(&name("ln.g")), p.get(&name("ln.b")), LN_EPS)?;
    let xz = g.linear(h, p.get(&name("in_proj.w")), None)?;
    let xs = g.slice_cols(xz, 0, e)?;
    let z = g.slice_cols(xz, e, 2 * e)?;
    let u = g.causal_conv1d(xs, p.get(&name("conv.w")), p.get(&name("conv.b")), pass.batch, seq)?;
    let u = g.silu(u);
    let dbc = g.linear(u, p.get(&name("x_proj.w")), None)?;
    let dt_in = g.slice_cols(dbc, 0, r)?;
    let bm = g.slice_cols(dbc, r, r + n)?;
    let cm = g.slice_cols(dbc, r + n, r + 2 * n)?;
    let delta = g.linear(dt_in, p.get(&name("dt_proj.w")), Some(p.get(&name("dt_proj.b"))))?;
    let delta = g.softplus(delta);
    let y = g.selective_scan(
        scan::Inputs {
            x: u,
            delta,
            a_log: p.get(&name("a_log")),
            b: bm,
            c: cm,
            d: p.get(&name("d")),
        },
        pass.batch,
        seq,
    )?;
    let gate = g.silu(z);
    let y = g.mul(y, gate)?;
    let out = g.linear(y, p.get(&name("out_proj.w")), None)?;
    let out = pass.dropout(g, out);
    g.add(x, out)
}

/// Token embeddings `[B·3K, d]` for a batch.
pub fn embed<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    config: &ModelConfig,
    batch: &SequenceBatch,
) -> Result<Var> {
    let n = batch.batch_size * batch.context;
    let mut x = g.conv2d_pixels(
        batch.states.clone(),
        [n, STACK, FRAME_SIDE, FRAME_SIDE],
        p.get("encoder.conv1.w"),
        p.get("encoder.conv1.b"),
        ENCODER_LAYERS[0].1,
    )?;
    x = g.relu(x);
    for (i, (_, stride, _)) in ENCODER_LAYERS.iter().enumerate().skip(1) {
        x = g.conv2d(
            x,
            p.get(&format!("encoder.conv{}.w", i + 1)),
            p.get(&format!("encoder.conv{}.b", i + 1)),
            *stride,
        )?;
        x = g.relu(x);
    }
    debug_assert_eq!(g.value(x).len(), n * encoder_output().0.pow(2) * encoder_output().1);
    let s = g.linear(x, p.get("encoder.proj.w"), Some(p.get("encoder.proj.b")))?;
    let mut s = g.tanh(s);

    let scale = config.rtg_scale;
    let rtg: Vec<S> = batch.rtg.iter().map(|&v| S::from_f64c(v / scale)).collect();
    let rtg = g.constant(&[n, 1], rtg);
    let r = g.linear(rtg, p.get("embed.rtg.w"), Some(p.get("embed.rtg.b")))?;
    let mut r = g.tanh(r);

    let ids: Vec<usize> = batch.actions.iter().map(|&a| a as usize).collect();
    let a = g.embedding(p.get("embed.action"), &ids)?;
    let mut a = g.tanh(a);

    if config.timestep_embedding {
        let ts: Vec<usize> = batch
            .timesteps
            .iter()
            .map(|&t| (t as usize).min(config.max_timestep - 1))
            .collect();
        let te = g.embedding(p.get("embed.timestep"), &ts)?;
        r = g.add(r, te)?;
        s = g.add(s, te)?;
        a = g.add(a, te)?;
    }
    g.interleave3([r, s, a], batch.context)
}

fn check_batch(config: &ModelConfig, batch: &SequenceBatch) -> Result<()> {
    let n = batch.batch_size * batch.context;
    if batch.context != config.context {
        return Err(Error::Shape(format!(
            "batch context {} differs from model context {}",
            batch.context, config.context
        )));
    }
    if batch.rtg.len() != n
        || batch.actions.len() != n
        || batch.timesteps.len() != n
        || batch.targets.len() != n
        || batch.pad_mask.len() != n
        || batch.states.len() != n * STACK * FRAME_SIDE * FRAME_SIDE
    {
        return Err(Error::Shape("batch buffers disagree with batch_size × context".into()));
    }
    if let Some(a) = batch.actions.iter().find(|&&a| a as usize >= config.action_space_size) {
        return Err(Error::Shape(format!(
            "action {a} outside model action space {}",
            config.action_space_size
        )));
    }
    Ok(())
}

/// Records the full forward pass and returns `[B·K, M]` logits.
pub fn forward<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    config: &ModelConfig,
    batch: &SequenceBatch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    check_batch(config, batch)?;
    let (bsz, k) = (batch.batch_size, batch.context);
    let mut pass = Pass {
        batch: bsz,
        steps: k,
        dropout: config.dropout,
        rng,
    };
    let tokens = embed(g, p, config, batch)?;
    let mut x = pass.dropout(g, tokens);
    let key_pad: Vec<bool> = (0..bsz * 3 * k).map(|i| batch.pad_mask[i / 3]).collect();
    for layer in 0..config.n_layers {
        x = match config.arch {
            Arch::Dt => dt_block(g, p, layer, x, config.n_heads, Some(&key_pad), &mut pass)?,
            Arch::Dm => dm_block(g, p, layer, x, config, &mut pass)?,
        };
    }
    let state_rows: Vec<usize> = (0..bsz * k).map(|i| (i / k) * 3 * k + 3 * (i % k) + 1).collect();
    let x = g.select_rows(x, &state_rows)?;
    let x = g.layer_norm(x, p.get("ln_f.g"), p.get("ln_f.b"), LN_EPS)?;
    g.linear(x, p.get("head.w"), None)
}

/// Cross-entropy of the batch targets under `logits`.
pub fn loss<S: Scalar>(g: &mut Graph<S>, logits: Var, batch: &SequenceBatch) -> Result<Var> {
    let targets: Vec<usize> = batch.targets.iter().map(|&a| a as usize).collect();
    g.cross_entropy(logits, &targets, &batch.pad_mask)
}

/// Inference-mode logits, row-major `[B·K, M]`.
pub fn predict<S: Scalar>(store: &ParamStore<S>, config: &ModelConfig, batch: &SequenceBatch) -> Result<Vec<S>> {
    let mut g = Graph::new();
    let p = Bound::new(&mut g, store, false);
    let logits = forward(&mut g, &p, config, batch, None)?;
    Ok(g.value(logits).to_vec())
}

/// Fraction of unpadded positions whose argmax logit equals the target.
pub fn accuracy<S: Scalar>(logits: &[S], batch: &SequenceBatch, m: usize) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for (i, row) in logits.chunks_exact(m).enumerate() {
        if batch.pad_mask[i] {
            continue;
        }
        total += 1;
        let best = argmax(row);
        if best == batch.targets[i] as usize {
            hits += 1;
        }
    }
    (hits, total)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}
