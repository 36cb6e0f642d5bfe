//! Inputs, the combined report and its SVG figures.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::correlation::{pearson_matrix, CorrelationMatrix};
use crate::forest::{random_forest_cv, ForestConfig, RegressionReport};
use crate::shap::{shap_values, ShapReport};
use crate::{Error, Result};
use seqrl_core::metrics::{GameMetrics, METRICS_HEADER};
use seqrl_eval::scores::{summarize, ScoreRow};

/// Model labels whose gap is explained.
pub const DT: &str = "dt";
pub const DM: &str = "dm";
pub const TARGET_LABEL: &str = "dt_minus_dm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub games: Vec<String>,
    pub feature_names: Vec<String>,
    /// `[game][feature]`.
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_metrics(rows: &[GameMetrics]) -> Result<Self> {
        let values: Vec<Vec<f64>> = rows.iter().map(|m| m.features().to_vec()).collect();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("metrics contain non-finite values".into()));
        }
        Ok(Self {
            games: rows.iter().map(|m| m.game.clone()).collect(),
            feature_names: GameMetrics::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            values,
        })
    }

    pub fn column(&self, f: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[f]).collect()
    }
}

pub fn write_metrics_csv(rows: &[GameMetrics]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(format!("{METRICS_HEADER}\n{}", String::from_utf8_lossy(&body)))
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<GameMetrics>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = r.headers().map_err(|e| Error::Input(e.to_string()))?.iter().collect();
    if header.join(",") != METRICS_HEADER {
        return Err(Error::Input(format!("metrics header {:?}, expected {METRICS_HEADER:?}", header.join(","))));
    }
    let rows: Vec<GameMetrics> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Input(e.to_string()))?;
    let mut games: Vec<&str> = rows.iter().map(|m| m.game.as_str()).collect();
    games.sort();
    if games.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("duplicate game in metrics".into()));
    }
    Ok(rows)
}

/// Per game, outlier-filtered mean normalized score of [`DT`] minus that
/// of [`DM`].
pub fn performance_gap(scores: &[ScoreRow], games: &[String]) -> Result<Vec<f64>> {
    let summaries = summarize(scores);
    games
        .iter()
        .map(|g| {
            let mean = |model: &str| {
                summaries
                    .iter()
                    .find(|s| &s.game == g && s.model == model)
                    .map(|s| s.filtered_normalized_mean)
                    .ok_or_else(|| Error::Input(format!("no {model} scores for game {g}")))
            };
            Ok(mean(DT)? - mean(DM)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub trees: usize,
    pub folds: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            trees: 1000,
            folds: 6,
            permutations: 200,
            seed: 123,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub features: FeatureMatrix,
    pub target_label: String,
    pub target: Vec<f64>,
    pub regression: RegressionReport,
    pub shap: ShapReport,
    pub correlation: CorrelationMatrix,
}

impl AnalysisReport {
    /// Checks the structural invariants a consumer relies on.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.games.len();
        let d = self.features.feature_names.len();
        let bad = |m: &str| Err(Error::Input(m.to_string()));
        if self.target.len() != n || self.features.values.len() != n || self.shap.values.len() != n {
            return bad("row counts disagree");
        }
        let imp = &self.regression.importances;
        if imp.len() != d || imp.iter().any(|v| v.is_nan() || *v < 0.0) || (imp.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("importances are not a distribution over the features");
        }
        let c = &self.correlation;
        let m = c.labels.len();
        if m != d + 1 || c.values.len() != m {
            return bad("correlation matrix has the wrong size");
        }
        for i in 0..m {
            if c.values[i].len() != m {
                return bad("correlation matrix is not square");
            }
            if c.values[i][i].is_some_and(|v| v != 1.0) {
                return bad("correlation diagonal is not one");
            }
            for j in 0..m {
                if c.values[i][j] != c.values[j][i] {
                    return bad("correlation matrix is not symmetric");
                }
                if c.values[i][j].is_some_and(|v| !(-1.0..=1.0).contains(&v)) {
                    return bad("correlation outside [-1, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Forest, Shapley values and correlations of the performance gap against
/// the game characteristics.
pub fn analyze(metrics: &[GameMetrics], scores: &[ScoreRow], config: &AnalysisConfig) -> Result<AnalysisReport> {
    let features = FeatureMatrix::from_metrics(metrics)?;
    let target = performance_gap(scores, &features.games)?;
    let (regression, forest) = random_forest_cv(
        &features.values,
        &target,
        &features.feature_names,
        &ForestConfig::new(config.trees),
        config.folds,
        config.seed,
    )?;
    let shap = shap_values(&forest, &features.values, config.permutations, config.seed)?;
    let mut columns = vec![(TARGET_LABEL.to_string(), target.clone())];
    for (f, name) in features.feature_names.iter().enumerate() {
        columns.push((name.clone(), features.column(f)));
    }
    let correlation = pearson_matrix(&columns)?;
    let report = AnalysisReport {
        config: config.clone(),
        features,
        target_label: TARGET_LABEL.into(),
        target,
        regression,
        shap,
        correlation,
    };
    report.validate()?;
    Ok(report)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Horizontal bars sorted by value, largest on top.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let max = values.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (left, width, row) = (180.0, 360.0, 26.0);
    let height = 50.0 + row * values.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + width + 80.0
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (k, &i) in order.iter().enumerate() {
        let y = 36.0 + row * k as f64;
        let w = width * values[i].max(0.0) / max;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 14.0,
            escape(&labels[i])
        );
        let _ = writeln!(s, r##"<rect x="{left}" y="{y}" width="{w:.3}" height="18" fill="#3b75af"/>"##);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{}">{:.4}</text>"#, left + w + 4.0, y + 14.0, values[i]);
    }
    s.push_str("</svg>\n");
    s
}

/// Blue for negative, red for positive, grey for undefined cells.
pub fn heatmap_svg(title: &str, m: &CorrelationMatrix) -> String {
    let n = m.labels.len();
    let (left, top, cell) = (170.0, 40.0, 52.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        left + cell * n as f64 + 10.0,
        top + cell * n as f64 + 150.0
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for i in 0..n {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            escape(&m.labels[i])
        );
        for j in 0..n {
            let x = left + cell * j as f64;
            let (fill, text) = match m.values[i][j] {
                Some(r) => {
                    let t = (255.0 * (1.0 - r.abs())).round() as u8;
                    let fill = if r >= 0.0 {
                        format!("rgb(255,{t},{t})")
                    } else {
                        format!("rgb({t},{t},255)")
                    };
                    (fill, format!("{r:.2}"))
                }
                None => ("rgb(200,200,200)".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    let base = top + cell * n as f64 + 8.0;
    for (j, label) in m.labels.iter().enumerate() {
        let x = left + cell * j as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{base}" transform="rotate(60 {x} {base})">{}</text>"#,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// File name and contents of every figure.
pub fn figures(report: &AnalysisReport) -> Vec<(&'static str, String)> {
    vec![
        (
            "importances.svg",
            bar_chart_svg(
                "Random forest feature importance",
                &report.regression.feature_names,
                &report.regression.importances,
            ),
        ),
        (
            "shap.svg",
            bar_chart_svg("Mean |SHAP value|", &report.features.feature_names, &report.shap.mean_abs),
        ),
        ("correlation.svg", heatmap_svg("Pearson correlation", &report.correlation)),
    ]
}
