//! Pearson correlation matrices with strength labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    #[serde(rename = "negligible")]
    Negligible,
    #[serde(rename = "weak")]
    Weak,
    #[serde(rename = "moderate")]
    Moderate,
    #[serde(rename = "strong")]
    Strong,
    #[serde(rename = "very strong")]
    VeryStrong,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strength::Negligible => "negligible",
            Strength::Weak => "weak",
            Strength::Moderate => "moderate",
            Strength::Strong => "strong",
            Strength::VeryStrong => "very strong",
        })
    }
}

/// Bins `|r|` at 0.1, 0.4, 0.7 and 0.9; a boundary belongs to the
/// stronger bin.
pub fn categorize_correlation(r: f64) -> Result<Strength> {
    let a = r.abs();
    if a.is_nan() || a > 1.0 {
        return Err(Error::OutOfRange(r));
    }
    Ok(if a < 0.1 {
        Strength::Negligible
    } else if a < 0.4 {
        Strength::Weak
    } else if a < 0.7 {
        Strength::Moderate
    } else if a < 0.9 {
        Strength::Strong
    } else {
        Strength::VeryStrong
    })
}

/// Mean-centered Pearson r, clamped to [-1, 1]. `None` when either input
/// is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "columns differ in length");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `None` (JSON null) where a constant column makes r undefined.
    pub values: Vec<Vec<Option<f64>>>,
    pub categories: Vec<Vec<Option<Strength>>>,
    /// Labels of constant columns.
    pub constant: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

pub fn pearson_matrix(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if rows < 2 {
        return Err(Error::Input("correlation needs at least two rows".into()));
    }
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(Error::Input("columns differ in length".into()));
    }
    if columns.iter().any(|c| c.1.iter().any(|v| !v.is_finite())) {
        return Err(Error::Input("columns must be finite".into()));
    }
    let m = columns.len();
    let mut values = vec![vec![None; m]; m];
    for i in 0..m {
        for j in i..m {
            let r = if i == j {
                pearson(&columns[i].1, &columns[i].1).map(|_| 1.0)
            } else {
                pearson(&columns[i].1, &columns[j].1)
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    let categories = values
        .iter()
        .map(|row| row.iter().map(|r| r.map(categorize_correlation).transpose()).collect())
        .collect::<Result<_>>()?;
    let constant = columns
        .iter()
        .filter(|c| pearson(&c.1, &c.1).is_none())
        .map(|c| c.0.clone())
        .collect();
    Ok(CorrelationMatrix {
        labels: columns.iter().map(|c| c.0.clone()).collect(),
        values,
        categories,
        constant,
    })
}
