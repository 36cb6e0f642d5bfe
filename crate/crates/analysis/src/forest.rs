//! Bootstrap forests of [`RegressionTree`]s, k-fold cross-validation and
//! mean-decrease-in-impurity importances.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::tree::RegressionTree;
use crate::{Error, Result};
use seqrl_core::seed::{derive_seed, rng_for};

/// Anything that maps a feature row to a real prediction.
pub trait Regressor: Sync {
    fn predict(&self, row: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Regressor for F {
    fn predict(&self, row: &[f64]) -> f64 {
        self(row)
    }
}

/// Forest hyperparameters. Everything beyond the tree count is fixed and
/// recorded for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features examined at each split.
    pub max_features: String,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub criterion: String,
}

impl ForestConfig {
    pub fn new(n_trees: usize) -> Self {
        Self {
            n_trees,
            bootstrap: true,
            max_features: "all".into(),
            min_samples_split: 2,
            min_samples_leaf: 1,
            criterion: "squared_error".into(),
        }
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self::new(1000)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
}

fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Input(format!("{} rows against {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Input("feature rows must share a non-zero width".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("features and targets must be finite".into()));
    }
    Ok(d)
}

impl RandomForest {
    /// Tree `i` is fitted on a bootstrap sample drawn from stream `i` of
    /// `seed`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &ForestConfig, seed: u64) -> Result<Self> {
        let d = check_xy(x, y)?;
        if config.n_trees == 0 {
            return Err(Error::Input("a forest needs at least one tree".into()));
        }
        let n = x.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|i| {
                let sample: Vec<usize> = if config.bootstrap {
                    let mut rng = rng_for(seed, i as u64);
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(x, y, &sample)
            })
            .collect();
        Ok(Self { trees, n_features: d })
    }

    /// Mean decrease in impurity: each tree's decreases normalized to one,
    /// averaged over trees that split at all, normalized again. Returns
    /// `None` when no tree split.
    pub fn importances(&self) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.n_features];
        let mut used = 0;
        for t in &self.trees {
            let dec = t.impurity_decrease();
            let total: f64 = dec.iter().sum();
            if total > 0.0 {
                used += 1;
                for (s, v) in sum.iter_mut().zip(dec) {
                    *s += v / total;
                }
            }
        }
        if used == 0 {
            return None;
        }
        let total: f64 = sum.iter().sum();
        Some(sum.into_iter().map(|v| v / total).collect())
    }
}

impl Regressor for RandomForest {
    fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse_mean: f64,
    /// Sample standard deviation (k − 1 denominator) of the fold RMSEs.
    pub rmse_std: f64,
    pub fold_rmse: Vec<f64>,
    pub feature_names: Vec<String>,
    pub importances: Vec<f64>,
    /// True when the full-data forest never split (constant target) and
    /// the importances fell back to uniform.
    pub uniform_importances: bool,
    pub folds: usize,
    pub seed: u64,
    pub forest: ForestConfig,
}

/// Shuffled partition of `0..n` into `k` folds; the first `n % k` folds
/// get one extra row.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, 0xF01D));
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        out.push(idx[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Cross-validated RMSE of a forest plus importances from a refit on all
/// rows. Returns the refitted forest alongside the report.
pub fn random_forest_cv(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    config: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<(RegressionReport, RandomForest)> {
    let n = x.len();
    let d = check_xy(x, y)?;
    if feature_names.len() != d {
        return Err(Error::Input(format!("{} names for {d} features", feature_names.len())));
    }
    if k < 2 || k > n {
        return Err(Error::Input(format!("{k} folds need 2 ≤ k ≤ rows ({n})")));
    }
    let mut fold_rmse = Vec::with_capacity(k);
    for (f, test) in kfold(n, k, seed).iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let forest = RandomForest::fit(&tx, &ty, config, derive_seed(seed, f as u64 + 1))?;
        let mse = test.iter().map(|&i| (forest.predict(&x[i]) - y[i]).powi(2)).sum::<f64>() / test.len() as f64;
        fold_rmse.push(mse.sqrt());
    }
    let rmse_mean = fold_rmse.iter().sum::<f64>() / k as f64;
    let rmse_std = (fold_rmse.iter().map(|r| (r - rmse_mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();

    let forest = RandomForest::fit(x, y, config, derive_seed(seed, 0))?;
    let (importances, uniform_importances) = match forest.importances() {
        Some(v) => (v, false),
        None => (vec![1.0 / d as f64; d], true),
    };
    let report = RegressionReport {
        rmse_mean,
        rmse_std,
        fold_rmse,
        feature_names: feature_names.to_vec(),
        importances,
        uniform_importances,
        folds: k,
        seed,
        forest: config.clone(),
    };
    Ok((report, forest))
}
