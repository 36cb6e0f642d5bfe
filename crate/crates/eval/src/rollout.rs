//! Return-conditioned autoregressive rollouts.
//!
//! The agent keeps the last `K` (return-to-go, frame stack, action)
//! triplets. At each step the action logits are read off the newest state
//! token, an action is chosen, executed, and the received reward is
//! subtracted from the running return-to-go.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use seqrl_core::data::{fill_frame_stack, SequenceBatch};
use seqrl_core::env::Environment;
use seqrl_core::fusion::{DefuseMode, Defuser, FusionMap};
use seqrl_core::seed::{derive_seed, rng_for};
use seqrl_models::model::{argmax, predict};
use seqrl_models::{Checkpoint, ModelConfig, ParamStore};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Multinomial over the temperature-scaled softmax.
    Sample,
    Argmax,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Selection::Sample),
            "argmax" => Ok(Selection::Argmax),
            other => Err(Error::Config(format!("unknown action selection {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// Initial return-to-go: a fixed value or five times the best training
/// return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetReturn {
    Fixed(f64),
    Auto(Auto),
}

impl TargetReturn {
    pub const AUTO: TargetReturn = TargetReturn::Auto(Auto::Auto);

    pub fn resolve(self, max_return: f64) -> f64 {
        match self {
            TargetReturn::Fixed(v) => v,
            TargetReturn::Auto(_) => 5.0 * max_return,
        }
    }
}

impl std::str::FromStr for TargetReturn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::AUTO);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(TargetReturn::Fixed(v)),
            _ => Err(Error::Config(format!("target return {s:?} is neither auto nor a number"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Episodes per seed.
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub target: TargetReturn,
    pub selection: Selection,
    pub temperature: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub defuse: DefuseMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            seeds: vec![123],
            target: TargetReturn::AUTO,
            selection: Selection::Sample,
            temperature: 1.0,
            max_steps: 10_000,
            defuse: DefuseMode::First,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.seeds.is_empty() || self.max_steps == 0 {
            return Err(Error::Config("episodes, seeds and max_steps must be non-empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// What the trainer records next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub game: String,
    /// Best episode return in the training data.
    pub max_return: f64,
    /// Present when the model was trained on fused actions.
    #[serde(default)]
    pub fusion: Option<FusionMap>,
}

/// A trained policy ready to act.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub meta: AgentMeta,
}

impl Agent {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: AgentMeta = serde_json::from_value(ck.meta.clone())?;
        if let Some(map) = &meta.fusion {
            map.validate()?;
            if map.groups.len() != ck.config.action_space_size {
                return Err(Error::ActionMismatch {
                    model: ck.config.action_space_size,
                    env: map.groups.len(),
                });
            }
        }
        Ok(Self {
            config: ck.config.clone(),
            params: ck.params.clone(),
            meta,
        })
    }

    /// Size of the primitive action space the agent plays in.
    pub fn primitive_actions(&self) -> usize {
        match &self.meta.fusion {
            Some(map) => map.primitive_count(),
            None => self.config.action_space_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub total_return: f64,
    /// Return-to-go fed to the model at each step.
    pub rtg: Vec<f64>,
    /// Primitive actions executed.
    pub actions: Vec<usize>,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

fn choose(logits: &[f32], cfg: &EvalConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Result<usize> {
    match cfg.selection {
        Selection::Argmax => Ok(argmax(logits)),
        Selection::Sample => {
            let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            let weights: Vec<f64> = logits
                .iter()
                .map(|&l| ((l as f64 - max) / cfg.temperature).exp())
                .collect();
            let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("action weights: {e}")))?;
            Ok(dist.sample(rng))
        }
    }
}

/// Plays one episode from `target` and returns what it earned.
pub fn rollout<E: Environment>(
    agent: &Agent,
    env: &mut E,
    cfg: &EvalConfig,
    target: f64,
    episode_seed: u64,
) -> Result<Rollout> {
    cfg.validate()?;
    if agent.primitive_actions() != env.action_count() {
        return Err(Error::ActionMismatch {
            model: agent.primitive_actions(),
            env: env.action_count(),
        });
    }
    let k = agent.config.context;
    let m = agent.config.action_space_size;
    let mut rng = rng_for(episode_seed, 0x5E1E);
    let mut defuser = Defuser::new(match cfg.defuse {
        DefuseMode::First => DefuseMode::First,
        DefuseMode::Uniform { seed } => DefuseMode::Uniform {
            seed: derive_seed(seed, episode_seed),
        },
    });
    let mut frames = env.reset(episode_seed);
    let mut rtg = vec![target];
    let mut fused: Vec<u8> = Vec::new();
    let mut actions = Vec::new();
    let mut total = 0.0;
    while actions.len() < cfg.max_steps {
        let t = actions.len();
        let len = (t + 1).min(k);
        let pad = k - len;
        let mut batch = SequenceBatch::padded(1, k);
        for j in 0..len {
            let s = t + 1 - len + j;
            let pos = pad + j;
            batch.rtg[pos] = rtg[s];
            batch.actions[pos] = fused.get(s).copied().unwrap_or(0);
            batch.timesteps[pos] = s as u32;
            batch.pad_mask[pos] = false;
            fill_frame_stack(&frames, s, batch.state_stack_mut(0, pos));
        }
        let logits = predict(&agent.params, &agent.config, &batch)?;
        let choice = choose(&logits[(k - 1) * m..k * m], cfg, &mut rng)?;
        let primitive = match &agent.meta.fusion {
            Some(map) => defuser.defuse(choice, map)?,
            None => choice,
        };
        let out = env.step(primitive)?;
        total += out.reward;
        fused.push(choice as u8);
        actions.push(primitive);
        if out.done {
            break;
        }
        rtg.push(rtg[t] - out.reward);
        frames.extend_from_slice(&out.frame);
    }
    Ok(Rollout {
        total_return: total,
        rtg,
        actions,
    })
}

/// Seed of evaluation episode `episode` under `seed`.
pub fn eval_episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(derive_seed(seed, 0xE7A1), episode as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReturn {
    pub seed: u64,
    pub episode: usize,
    pub raw: f64,
    pub steps: usize,
}

/// Every (seed, episode) rollout of `cfg`, in seed then episode order.
pub fn evaluate<E: Environment>(agent: &Agent, env: &mut E, cfg: &EvalConfig) -> Result<Vec<EpisodeReturn>> {
    cfg.validate()?;
    let target = cfg.target.resolve(agent.meta.max_return);
    let mut out = Vec::with_capacity(cfg.seeds.len() * cfg.episodes);
    for &seed in &cfg.seeds {
        for episode in 0..cfg.episodes {
            let r = rollout(agent, env, cfg, target, eval_episode_seed(seed, episode))?;
            log::debug!("seed {seed} episode {episode}: return {} in {} steps", r.total_return, r.steps());
            out.push(EpisodeReturn {
                seed,
                episode,
                raw: r.total_return,
                steps: r.steps(),
            });
        }
    }
    Ok(out)
}
