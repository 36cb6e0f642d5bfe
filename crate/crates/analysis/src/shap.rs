//! Interventional Shapley values by permutation sampling.
//!
//! For an instance `x` and a random feature ordering, each background row
//! is walked towards `x` one feature at a time in that order; the change
//! in prediction at each switch is credited to the switched feature. The
//! credits of one walk telescope to `f(x) − f(background)`, so averaging
//! over every background row makes local accuracy exact for any number of
//! permutations.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forest::Regressor;
use crate::{Error, Result};
use seqrl_core::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    /// `[instance][feature]`.
    pub values: Vec<Vec<f64>>,
    pub mean_abs: Vec<f64>,
    /// Mean prediction over the background rows.
    pub base_value: f64,
    pub predictions: Vec<f64>,
    pub permutations: usize,
    pub seed: u64,
}

impl ShapReport {
    /// Share of the total mean-|SHAP| mass per feature.
    pub fn mass(&self) -> Vec<f64> {
        let total: f64 = self.mean_abs.iter().sum();
        if total == 0.0 {
            return vec![0.0; self.mean_abs.len()];
        }
        self.mean_abs.iter().map(|v| v / total).collect()
    }
}

/// Explains every row of `x` against `x` itself as the background.
pub fn shap_values(model: &impl Regressor, x: &[Vec<f64>], permutations: usize, seed: u64) -> Result<ShapReport> {
    if x.is_empty() || permutations == 0 {
        return Err(Error::Input("need at least one row and one permutation".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Input("feature rows must share a width".into()));
    }
    let background: Vec<f64> = x.iter().map(|r| model.predict(r)).collect();
    let base_value = background.iter().sum::<f64>() / x.len() as f64;
    let walks = (permutations * x.len()) as f64;

    let values: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut order: Vec<usize> = (0..d).collect();
            let mut phi = vec![0.0; d];
            let mut z = vec![0.0; d];
            for _ in 0..permutations {
                order.shuffle(&mut rng);
                for (b, row) in x.iter().enumerate() {
                    z.copy_from_slice(row);
                    let mut prev = background[b];
                    for &f in &order {
                        if z[f] == x[i][f] {
                            continue;
                        }
                        z[f] = x[i][f];
                        let cur = model.predict(&z);
                        phi[f] += cur - prev;
                        prev = cur;
                    }
                }
            }
            phi.iter().map(|v| v / walks).collect()
        })
        .collect();

    let mean_abs = (0..d)
        .map(|f| values.iter().map(|v| v[f].abs()).sum::<f64>() / x.len() as f64)
        .collect();
    Ok(ShapReport {
        values,
        mean_abs,
        base_value,
        predictions: background,
        permutations,
        seed,
    })
}
