//! CART regression trees: variance-reduction splits over every feature,
//! grown until each leaf is pure or cannot be split.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    /// Weighted squared-error decrease credited to each feature.
    impurity_decrease: Vec<f64>,
}

/// Relative score margin a split needs to beat the current best.
pub const TIE_TOLERANCE: f64 = 1e-12;

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (y[i] - mean).powi(2)).sum()
}

impl RegressionTree {
    /// Fits on the rows listed in `sample` (repeats act as weights).
    /// `x` is row-major with `features` columns.
    pub fn fit(x: &[Vec<f64>], y: &[f64], sample: &[usize]) -> Self {
        assert!(!sample.is_empty(), "cannot fit a tree on no rows");
        let features = x.first().map_or(0, Vec::len);
        let mut tree = Self {
            nodes: Vec::new(),
            impurity_decrease: vec![0.0; features],
        };
        tree.grow(x, y, sample.to_vec());
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
        if idx.len() < 2 || pure {
            return id;
        }
        let Some(best) = Self::best_split(x, y, &idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][best.feature] <= best.threshold);
        self.impurity_decrease[best.feature] += (sse(y, &idx) - sse(y, &l) - sse(y, &r)).max(0.0);
        let left = self.grow(x, y, l);
        let right = self.grow(x, y, r);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Maximizes `S_L²/n_L + S_R²/n_R`, which is the squared-error
    /// decrease up to a constant. Ties keep the earliest feature and the
    /// lowest threshold; scores within [`TIE_TOLERANCE`] (relative) count
    /// as ties, so that one partition reached through two features is
    /// not decided by summation order.
    #[allow(clippy::needless_range_loop)]
    fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> Option<Best> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| y[i]).sum();
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        for f in 0..x[0].len() {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += y[order[k]];
                let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
                let right = total - left;
                let score = left * left / nl + right * right / nr;
                if best.as_ref().is_none_or(|b| score > b.score + TIE_TOLERANCE * b.score.abs().max(1.0)) {
                    best = Some(Best {
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                        score,
                    });
                }
            }
        }
        best
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn impurity_decrease(&self) -> &[f64] {
        &self.impurity_decrease
    }
}
