//! Causal multi-head scaled dot-product attention on packed projections.

use crate::scalar::{matmul, Scalar, View, ViewMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    /// Model width; each head gets `d / heads`.
    pub d: usize,
}

impl Shape {
    fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

fn visible(i: usize, j: usize, pad: Option<&[bool]>, row0: usize) -> bool {
    j <= i && (j == i || pad.is_none_or(|p| !p[row0 + j]))
}

/// Returns the `[B·T, d]` head outputs and the `[B, H, T, T]` attention
/// probabilities.
pub fn forward<S: Scalar>(sh: &Shape, qkv: &[S], key_pad: Option<&[bool]>) -> (Vec<S>, Vec<S>) {
    let (t, d, dh) = (sh.seq, sh.d, sh.head_dim());
    let rows = sh.batch * t;
    let scale = S::from_f64c(1.0 / (dh as f64).sqrt());
    let mut out = vec![S::zero(); rows * d];
    let mut probs = vec![S::zero(); sh.batch * sh.heads * t * t];
    let mut scores = vec![S::zero(); t * t];
    let packed = View::new(qkv, rows, 3 * d);
    for b in 0..sh.batch {
        for h in 0..sh.heads {
            let q = packed.block(b * t, h * dh, t, dh);
            let k = packed.block(b * t, d + h * dh, t, dh);
            let v = packed.block(b * t, 2 * d + h * dh, t, dh);
            matmul(q, k.t(), ViewMut::new(&mut scores, t, t), S::zero());
            let p = &mut probs[(b * sh.heads + h) * t * t..(b * sh.heads + h + 1) * t * t];
            for i in 0..t {
                let mut max = S::neg_infinity();
                for j in 0..=i {
                    if visible(i, j, key_pad, b * t) {
                        max = max.max(scores[i * t + j] * scale);
                    }
                }
                let mut z = S::zero();
                for j in 0..=i {
                    if visible(i, j, key_pad, b * t) {
                        let e = (scores[i * t + j] * scale - max).exp();
                        p[i * t + j] = e;
                        z = z + e;
                    }
                }
                for j in 0..=i {
                    p[i * t + j] = p[i * t + j] / z;
                }
            }
            matmul(
                View::new(p, t, t),
                v,
                ViewMut::new(&mut out, rows, d).block(b * t, h * dh, t, dh),
                S::zero(),
            );
        }
    }
    (out, probs)
}

/// Gradient with respect to the packed projections.
pub fn backward<S: Scalar>(sh: &Shape, qkv: &[S], probs: &[S], dout: &[S]) -> Vec<S> {
    let (t, d, dh) = (sh.seq, sh.d, sh.head_dim());
    let rows = sh.batch * t;
    let scale = S::from_f64c(1.0 / (dh as f64).sqrt());
    let mut dqkv = vec![S::zero(); rows * 3 * d];
    let mut dp = vec![S::zero(); t * t];
    let packed = View::new(qkv, rows, 3 * d);
    let dview = View::new(dout, rows, d);
    for b in 0..sh.batch {
        for h in 0..sh.heads {
            let q = packed.block(b * t, h * dh, t, dh);
            let k = packed.block(b * t, d + h * dh, t, dh);
            let v = packed.block(b * t, 2 * d + h * dh, t, dh);
            let d_o = dview.block(b * t, h * dh, t, dh);
            let p = &probs[(b * sh.heads + h) * t * t..(b * sh.heads + h + 1) * t * t];
            matmul(
                View::new(p, t, t).t(),
                d_o,
                ViewMut::new(&mut dqkv, rows, 3 * d).block(b * t, 2 * d + h * dh, t, dh),
                S::zero(),
            );
            matmul(d_o, v.t(), ViewMut::new(&mut dp, t, t), S::zero());
            for i in 0..t {
                let row = i * t;
                let dot: S = (0..=i).map(|j| dp[row + j] * p[row + j]).sum();
                for j in 0..t {
                    dp[row + j] = if j <= i {
                        p[row + j] * (dp[row + j] - dot) * scale
                    } else {
                        S::zero()
                    };
                }
            }
            matmul(
                View::new(&dp, t, t),
                k,
                ViewMut::new(&mut dqkv, rows, 3 * d).block(b * t, h * dh, t, dh),
                S::zero(),
            );
            matmul(
                View::new(&dp, t, t).t(),
                q,
                ViewMut::new(&mut dqkv, rows, 3 * d).block(b * t, d + h * dh, t, dh),
                S::zero(),
            );
        }
    }
    dqkv
}
