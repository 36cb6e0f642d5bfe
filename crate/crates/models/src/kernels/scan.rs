//! Sequential selective state-space scan.
//!
//! Per sequence, channel `c` and step `t`:
//!
//! ```text
//! Ā = exp(Δ[t,c] · A[c])          (zero-order hold)
//! B̄ = Δ[t,c] · B[t]                (Euler)
//! h_t = Ā ⊙ h_{t-1} + B̄ · x[t,c],  h_0 = 0
//! y[t,c] = C[t] · h_t + D[c] · x[t,c]
//! ```

use crate::graph::Var;
use crate::scalar::Scalar;

/// Graph operands. `a_log` holds `ln(-A)`.
#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    /// `[B·T, E]`.
    pub x: Var,
    /// `[B·T, E]`, already positive.
    pub delta: Var,
    /// `[E, N]`.
    pub a_log: Var,
    /// `[B·T, N]`.
    pub b: Var,
    /// `[B·T, N]`.
    pub c: Var,
    /// `[E]`.
    pub d: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub batch: usize,
    pub seq: usize,
    pub channels: usize,
    pub state: usize,
}

/// Raw operand values; `a` is the (negative) state matrix diagonal.
#[derive(Clone, Copy)]
pub struct Operands<'a, S> {
    pub x: &'a [S],
    pub delta: &'a [S],
    pub a: &'a [S],
    pub b: &'a [S],
    pub c: &'a [S],
    pub d: &'a [S],
}

pub struct Grads<S> {
    pub x: Vec<S>,
    pub delta: Vec<S>,
    pub a: Vec<S>,
    pub b: Vec<S>,
    pub c: Vec<S>,
    pub d: Vec<S>,
}

/// Returns `y` (`[B·T, E]`) and every hidden state (`[B·T, E, N]`).
pub fn forward<S: Scalar>(sh: &Shape, op: Operands<S>) -> (Vec<S>, Vec<S>) {
    let (t_len, e, n) = (sh.seq, sh.channels, sh.state);
    let mut y = vec![S::zero(); sh.batch * t_len * e];
    let mut states = vec![S::zero(); sh.batch * t_len * e * n];
    for b in 0..sh.batch {
        for t in 0..t_len {
            let bt = b * t_len + t;
            for c in 0..e {
                let dt = op.delta[bt * e + c];
                let xv = op.x[bt * e + c];
                let cur = (bt * e + c) * n;
                let mut acc = op.d[c] * xv;
                for k in 0..n {
                    let prev = if t > 0 { states[cur - e * n + k] } else { S::zero() };
                    let abar = (dt * op.a[c * n + k]).exp();
                    let h = abar * prev + dt * op.b[bt * n + k] * xv;
                    states[cur + k] = h;
                    acc = acc + op.c[bt * n + k] * h;
                }
                y[bt * e + c] = acc;
            }
        }
    }
    (y, states)
}

pub fn backward<S: Scalar>(sh: &Shape, op: Operands<S>, states: &[S], dy: &[S]) -> Grads<S> {
    let (t_len, e, n) = (sh.seq, sh.channels, sh.state);
    let mut g = Grads {
        x: vec![S::zero(); op.x.len()],
        delta: vec![S::zero(); op.delta.len()],
        a: vec![S::zero(); op.a.len()],
        b: vec![S::zero(); op.b.len()],
        c: vec![S::zero(); op.c.len()],
        d: vec![S::zero(); op.d.len()],
    };
    let mut dh = vec![S::zero(); e * n];
    for b in 0..sh.batch {
        dh.iter_mut().for_each(|v| *v = S::zero());
        for t in (0..t_len).rev() {
            let bt = b * t_len + t;
            for c in 0..e {
                let gy = dy[bt * e + c];
                let xv = op.x[bt * e + c];
                let dt = op.delta[bt * e + c];
                let cur = (bt * e + c) * n;
                g.d[c] = g.d[c] + gy * xv;
                let mut dx = gy * op.d[c];
                let mut ddt = S::zero();
                for k in 0..n {
                    let h = states[cur + k];
                    let prev = if t > 0 { states[cur - e * n + k] } else { S::zero() };
                    let av = op.a[c * n + k];
                    let bv = op.b[bt * n + k];
                    g.c[bt * n + k] = g.c[bt * n + k] + gy * h;
                    let dhk = dh[c * n + k] + gy * op.c[bt * n + k];
                    let abar = (dt * av).exp();
                    let dabar = dhk * prev;
                    ddt = ddt + dabar * abar * av + dhk * bv * xv;
                    g.a[c * n + k] = g.a[c * n + k] + dabar * abar * dt;
                    g.b[bt * n + k] = g.b[bt * n + k] + dhk * dt * xv;
                    dx = dx + dhk * dt * bv;
                    dh[c * n + k] = dhk * abar;
                }
                g.x[bt * e + c] = dx;
                g.delta[bt * e + c] = ddt;
            }
        }
    }
    g
}
