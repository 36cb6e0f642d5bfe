//! Attribution battery relating game characteristics to the performance
//! gap between the two architectures.
//!
//! * [`tree`]: CART regression trees grown to purity.
//! * [`forest`]: bootstrap forests, k-fold cross-validation and
//!   mean-decrease-in-impurity importances.
//! * [`shap`]: interventional Shapley values by permutation sampling.
//! * [`correlation`]: Pearson matrices and strength labels.
//! * [`report`]: assembling inputs, the JSON report and SVG figures.

pub mod correlation;
pub mod error;
pub mod forest;
pub mod report;
pub mod shap;
pub mod tree;

pub use correlation::{categorize_correlation, pearson, pearson_matrix, CorrelationMatrix, Strength};
pub use error::{Error, Result};
pub use forest::{random_forest_cv, ForestConfig, RandomForest, RegressionReport, Regressor};
pub use report::{analyze, AnalysisConfig, AnalysisReport, FeatureMatrix};
pub use shap::{shap_values, ShapReport};
pub use tree::RegressionTree;
