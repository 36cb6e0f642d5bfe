//! Per-episode score rows and their summaries.

use serde::{Deserialize, Serialize};

use crate::outliers::remove_outliers;
use crate::rollout::EpisodeReturn;
use crate::score::{normalized_score, NormalizationBaseline};
use crate::{Error, Result};

pub const SCORES_HEADER: &str = "game,model,seed,episode,raw_score,normalized_score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub game: String,
    pub model: String,
    pub seed: u64,
    pub episode: usize,
    pub raw_score: f64,
    pub normalized_score: f64,
}

pub fn score_rows(
    game: &str,
    model: &str,
    returns: &[EpisodeReturn],
    baseline: &NormalizationBaseline,
) -> Result<Vec<ScoreRow>> {
    returns
        .iter()
        .map(|r| {
            Ok(ScoreRow {
                game: game.to_string(),
                model: model.to_string(),
                seed: r.seed,
                episode: r.episode,
                raw_score: r.raw,
                normalized_score: normalized_score(r.raw, baseline)?,
            })
        })
        .collect()
}

pub fn write_scores_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        return Ok(format!("{SCORES_HEADER}\n"));
    }
    let bytes = w.into_inner().map_err(|e| Error::Scores(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Scores(e.to_string()))
}

pub fn read_scores_csv(text: &str) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SCORES_HEADER {
        return Err(Error::Scores(format!("header {:?}, expected {SCORES_HEADER:?}", header.join(","))));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| !(r.raw_score.is_finite() && r.normalized_score.is_finite())) {
        return Err(Error::Scores(format!("non-finite score for {} / {}", bad.game, bad.model)));
    }
    Ok(rows)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One (game, model) cell: raw and normalized statistics, with and
/// without outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub game: String,
    pub model: String,
    pub episodes: usize,
    pub raw_mean: f64,
    pub raw_std: f64,
    pub normalized_mean: f64,
    pub normalized_std: f64,
    pub filtered_normalized_mean: f64,
    pub filtered_normalized_std: f64,
    pub filtered_raw_mean: f64,
    /// Positions within this cell's rows, in removal order.
    pub removed: Vec<usize>,
}

/// Summaries per (game, model), sorted by game then model.
pub fn summarize(rows: &[ScoreRow]) -> Vec<EvalSummary> {
    let mut keys: Vec<(String, String)> = rows.iter().map(|r| (r.game.clone(), r.model.clone())).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(game, model)| {
            let cell: Vec<&ScoreRow> = rows.iter().filter(|r| r.game == game && r.model == model).collect();
            let raw: Vec<f64> = cell.iter().map(|r| r.raw_score).collect();
            let norm: Vec<f64> = cell.iter().map(|r| r.normalized_score).collect();
            let (raw_mean, raw_std) = mean_std(&raw);
            let (normalized_mean, normalized_std) = mean_std(&norm);
            let (kept, removed) = remove_outliers(&norm);
            let (filtered_normalized_mean, filtered_normalized_std) = mean_std(&kept);
            let kept_raw: Vec<f64> = (0..raw.len()).filter(|i| !removed.contains(i)).map(|i| raw[i]).collect();
            EvalSummary {
                game,
                model,
                episodes: cell.len(),
                raw_mean,
                raw_std,
                normalized_mean,
                normalized_std,
                filtered_normalized_mean,
                filtered_normalized_std,
                filtered_raw_mean: mean_std(&kept_raw).0,
                removed,
            }
        })
        .collect()
}
