//! Run configuration: one TOML file, two built-in profiles.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqrl_analysis::report::AnalysisConfig;
use seqrl_core::env::{default_suite, GameSpec, Policy};
use seqrl_core::fusion::DefuseMode;
use seqrl_eval::{EvalConfig, Selection, TargetReturn};
use seqrl_models::{Arch, ModelConfig, TrainConfig};

use crate::error::{CliError, CliResult};

pub const PROFILES: [(&str, &str); 2] = [
    ("ci", include_str!("../profiles/ci.toml")),
    ("paper", include_str!("../profiles/paper.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    /// Names from the default suite.
    #[serde(default)]
    pub games: Vec<String>,
    /// Extra game specs, added after the named ones.
    #[serde(default)]
    pub custom: Vec<GameSpec>,
    pub episodes: usize,
    pub sample_fraction: f64,
    /// Exploration rate of the scripted expert that collects the data.
    pub epsilon: f64,
    /// Rollouts behind each normalization anchor.
    pub baseline_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub archs: Vec<Arch>,
    pub contexts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub max_timestep: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub warmup_tokens: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub target: TargetReturn,
    pub selection: Selection,
    pub temperature: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub defuse: DefuseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    /// Action count the frequency strategy merges down to.
    pub target: usize,
    /// Share of the dataset's final transitions the frequencies come from.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub suite: SuiteSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub stats: StatsSection,
    pub fusion: FusionSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub trees: usize,
    pub folds: usize,
    pub permutations: usize,
}

impl RunConfig {
    pub fn profile(name: &str) -> CliResult<Self> {
        let text = PROFILES
            .iter()
            .find(|p| p.0 == name)
            .map(|p| p.1)
            .ok_or_else(|| CliError::config(format!("unknown profile {name:?} (expected ci or paper)")))?;
        Self::parse(text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let specs = self.games()?;
        if specs.is_empty() {
            return Err(CliError::config("the suite has no games"));
        }
        for s in &specs {
            s.validate()?;
        }
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::config("duplicate game name in the suite"));
        }
        let s = &self.suite;
        if s.episodes == 0 || s.baseline_episodes == 0 {
            return Err(CliError::config("suite episodes must be ≥ 1"));
        }
        if !(s.sample_fraction > 0.0 && s.sample_fraction <= 1.0) {
            return Err(CliError::config(format!("sample_fraction {} outside (0, 1]", s.sample_fraction)));
        }
        if !(0.0..=1.0).contains(&s.epsilon) {
            return Err(CliError::config(format!("epsilon {} outside [0, 1]", s.epsilon)));
        }
        let m = &self.model;
        if m.archs.is_empty() || m.contexts.is_empty() || m.seeds.is_empty() {
            return Err(CliError::config("model archs, contexts and seeds must be non-empty"));
        }
        for &k in &m.contexts {
            self.model_config(Arch::Dt, 2, k)?.validate()?;
        }
        self.train_config(0).validate()?;
        self.eval_config(0).validate()?;
        if self.stats.frames == 0 {
            return Err(CliError::config("stats frames must be ≥ 1"));
        }
        let a = &self.analysis;
        if a.trees == 0 || a.permutations == 0 || a.folds < 2 {
            return Err(CliError::config("analysis needs trees ≥ 1, permutations ≥ 1 and folds ≥ 2"));
        }
        if a.folds > specs.len() {
            return Err(CliError::config(format!(
                "{} folds need at least as many games (suite has {})",
                a.folds,
                specs.len()
            )));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn games(&self) -> CliResult<Vec<GameSpec>> {
        let suite = default_suite();
        let mut out = Vec::new();
        for name in &self.suite.games {
            let spec = suite
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| CliError::config(format!("unknown suite game {name:?}")))?;
            out.push(spec.clone());
        }
        out.extend(self.suite.custom.iter().cloned());
        Ok(out)
    }

    pub fn policy(&self) -> Policy {
        Policy::ScriptedExpert {
            epsilon: self.suite.epsilon,
        }
    }

    pub fn model_config(&self, arch: Arch, actions: usize, context: usize) -> CliResult<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            n_layers: m.n_layers,
            d_model: m.d_model,
            n_heads: m.n_heads,
            dropout: m.dropout,
            ..ModelConfig::new(arch, actions, context, m.max_timestep)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            betas: t.betas,
            eps: t.eps,
            weight_decay: t.weight_decay,
            grad_clip: t.grad_clip,
            warmup_tokens: t.warmup_tokens,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            seed,
        }
    }

    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            episodes: e.episodes,
            seeds: vec![seed],
            target: e.target,
            selection: e.selection,
            temperature: e.temperature,
            max_steps: e.max_steps,
            defuse: e.defuse,
        }
    }

    pub fn analysis_config(&self, seed: u64) -> AnalysisConfig {
        AnalysisConfig {
            trees: self.analysis.trees,
            folds: self.analysis.folds,
            permutations: self.analysis.permutations,
            seed,
        }
    }
}
