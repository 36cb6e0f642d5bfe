use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Causal self-attention blocks.
    Dt,
    /// Gated selective-SSM blocks.
    Dm,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Dt => "dt",
            Arch::Dm => "dm",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(Arch::Dt),
            "dm" => Ok(Arch::Dm),
            other => Err(Error::Config(format!("unknown model {other:?} (expected dt or dm)"))),
        }
    }
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub n_layers: usize,
    pub d_model: usize,
    /// Context length K in timesteps; the token sequence is 3K long.
    pub context: usize,
    pub n_heads: usize,
    pub ssm_state: usize,
    pub conv_kernel: usize,
    pub expand: usize,
    pub dropout: f64,
    pub action_space_size: usize,
    /// Size of the timestep embedding table; later steps share the last row.
    pub max_timestep: usize,
    /// Return-to-go inputs are divided by this before embedding.
    #[serde(default = "one")]
    pub rtg_scale: f64,
    #[serde(default = "yes")]
    pub timestep_embedding: bool,
}

impl ModelConfig {
    pub fn new(arch: Arch, action_space_size: usize, context: usize, max_timestep: usize) -> Self {
        Self {
            arch,
            n_layers: 6,
            d_model: 128,
            context,
            n_heads: 8,
            ssm_state: 16,
            conv_kernel: 4,
            expand: 2,
            dropout: 0.1,
            action_space_size,
            max_timestep,
            rtg_scale: 1.0,
            timestep_embedding: true,
        }
    }

    /// Two layers of width 32.
    pub fn tiny(arch: Arch, action_space_size: usize, context: usize, max_timestep: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 32,
            n_heads: 4,
            ..Self::new(arch, action_space_size, context, max_timestep)
        }
    }

    pub fn inner_width(&self) -> usize {
        self.expand * self.d_model
    }

    /// Rank of the Δ projection.
    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("context", self.context),
            ("n_heads", self.n_heads),
            ("ssm_state", self.ssm_state),
            ("conv_kernel", self.conv_kernel),
            ("expand", self.expand),
            ("max_timestep", self.max_timestep),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be ≥ 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(1..=18).contains(&self.action_space_size) {
            return Err(Error::Config(format!("action_space_size {} outside 1..=18", self.action_space_size)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.rtg_scale.is_finite() && self.rtg_scale > 0.0) {
            return Err(Error::Config(format!("rtg_scale {} must be positive", self.rtg_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Targets processed before the learning rate reaches its peak.
    pub warmup_tokens: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 6e-4,
            betas: (0.9, 0.95),
            eps: 1e-8,
            weight_decay: 0.1,
            grad_clip: 1.0,
            warmup_tokens: 512 * 20,
            max_epochs: 5,
            batch_size: 256,
            seed: 123,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("eps", self.eps),
            ("grad_clip", self.grad_clip),
            ("max_epochs", self.max_epochs as f64),
            ("batch_size", self.batch_size as f64),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config(format!("betas {:?} outside [0, 1)", self.betas)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be ≥ 0", self.weight_decay)));
        }
        Ok(())
    }
}
