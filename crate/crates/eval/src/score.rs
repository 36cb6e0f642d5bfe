use serde::{Deserialize, Serialize};

use seqrl_core::data::TrajectoryDataset;
use seqrl_core::env::{mean_policy_return, GameSpec, Policy};

use crate::{Error, Result};

/// Score anchors: `random_score` maps to 0, `human_score` to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBaseline {
    pub game: String,
    pub random_score: f64,
    pub human_score: f64,
}

impl NormalizationBaseline {
    pub fn new(game: impl Into<String>, random_score: f64, human_score: f64) -> Result<Self> {
        let b = Self {
            game: game.into(),
            random_score,
            human_score,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.random_score.is_finite() && self.human_score.is_finite()) {
            return Err(Error::Config(format!("{}: baseline scores must be finite", self.game)));
        }
        if self.human_score == self.random_score {
            return Err(Error::DegenerateBaseline(self.game.clone()));
        }
        Ok(())
    }

    /// Random-walk and human reference scores for the Atari games.
    pub fn atari(game: &str) -> Option<Self> {
        ATARI
            .iter()
            .find(|(name, _, _)| name.eq_ignore_ascii_case(game))
            .map(|&(name, r, h)| Self {
                game: name.to_string(),
                random_score: r,
                human_score: h,
            })
    }

    /// Anchors for a synthetic game: the seeded random policy and the
    /// noiseless scripted expert, each averaged over `episodes` rollouts.
    pub fn synthetic(spec: &GameSpec, episodes: usize, seed: u64) -> Result<Self> {
        let random = mean_policy_return(spec, Policy::Random, episodes, seed)?;
        let expert = mean_policy_return(spec, Policy::ScriptedExpert { epsilon: 0.0 }, episodes, seed)?;
        Self::new(spec.name.clone(), random, expert)
    }
}

const ATARI: [(&str, f64, f64); 12] = [
    ("Breakout", 1.7, 30.5),
    ("Qbert", 163.9, 13455.0),
    ("Hero", 1027.0, 30826.4),
    ("KungFuMaster", 258.5, 22736.3),
    ("Pong", -20.7, 14.6),
    ("Seaquest", 68.4, 42054.7),
    ("Alien", 227.8, 7127.7),
    ("BankHeist", 14.0, 753.0),
    ("BattleZone", 2360.0, 37187.5),
    ("RoadRunner", 11.5, 7845.0),
    ("FishingDerby", -92.0, -39.0),
    ("SpaceInvaders", 148.0, 1669.0),
];

/// `100 · (raw − random) / (human − random)`.
pub fn normalized_score(raw: f64, baseline: &NormalizationBaseline) -> Result<f64> {
    baseline.validate()?;
    Ok(100.0 * (raw - baseline.random_score) / (baseline.human_score - baseline.random_score))
}

/// Initial return-to-go for evaluation: five times the best return in
/// the training data.
pub fn expected_return(dataset: &TrajectoryDataset) -> f64 {
    let max = dataset.max_return();
    if max == 0.0 {
        log::warn!("{}: best training return is 0, target return is 0", dataset.game_name());
    }
    5.0 * max
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakout_anchors() {
        let b = NormalizationBaseline::atari("breakout").unwrap();
        assert_eq!(normalized_score(1.7, &b).unwrap(), 0.0);
        assert_eq!(normalized_score(30.5, &b).unwrap(), 100.0);
        assert!((normalized_score(16.1, &b).unwrap() - 50.0).abs() <= 1e-9);
    }

    #[test]
    fn degenerate_baseline_is_an_error() {
        assert!(NormalizationBaseline::new("x", 3.0, 3.0).is_err());
        let b = NormalizationBaseline {
            game: "x".into(),
            random_score: 1.0,
            human_score: 1.0,
        };
        assert!(matches!(normalized_score(2.0, &b), Err(Error::DegenerateBaseline(_))));
    }

    #[test]
    fn negative_anchors() {
        let b = NormalizationBaseline::atari("FishingDerby").unwrap();
        assert_eq!(normalized_score(-92.0, &b).unwrap(), 0.0);
        assert_eq!(normalized_score(-39.0, &b).unwrap(), 100.0);
    }
}
