//! Tape-based reverse-mode differentiation over coarse tensor operations.
//!
//! Every tensor is a flat row-major buffer whose last dimension is the
//! "feature" axis; most ops treat inputs as `[rows, features]` matrices.

use rand::Rng;

use crate::kernels::{attention, conv, scan};
use crate::scalar::{matmul, Scalar, View, ViewMut};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Gelu,
    Silu,
    Softplus,
    Tanh,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

impl Unary {
    fn apply<S: Scalar>(self, x: S) -> S {
        let one = S::one();
        match self {
            Unary::Relu => x.max(S::zero()),
            Unary::Gelu => {
                let c = S::from_f64c(GELU_C);
                let a = S::from_f64c(GELU_A);
                S::from_f64c(0.5) * x * (one + (c * (x + a * x * x * x)).tanh())
            }
            Unary::Silu => x / (one + (-x).exp()),
            Unary::Softplus => softplus(x),
            Unary::Tanh => x.tanh(),
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        let one = S::one();
        match self {
            Unary::Relu => {
                if x > S::zero() {
                    one
                } else {
                    S::zero()
                }
            }
            Unary::Gelu => {
                let c = S::from_f64c(GELU_C);
                let a = S::from_f64c(GELU_A);
                let half = S::from_f64c(0.5);
                let inner = c * (x + a * x * x * x);
                let th = inner.tanh();
                let dinner = c * (one + S::from_f64c(3.0) * a * x * x);
                half * (one + th) + half * x * (one - th * th) * dinner
            }
            Unary::Silu => {
                let s = one / (one + (-x).exp());
                s * (one + x * (one - s))
            }
            Unary::Softplus => one / (one + (-x).exp()),
            Unary::Tanh => one - y * y,
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<S: Scalar>(x: S) -> S {
    if x > S::from_f64c(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

enum ConvSource {
    Node(Var),
    /// `u8` frames in `[n, c, h, w]` layout, scaled by 1/255.
    Pixels(Vec<u8>),
}

enum Op<S> {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        src: ConvSource,
        w: Var,
        b: Var,
        geom: conv::Geometry,
    },
    Unary {
        x: Var,
        kind: Unary,
    },
    Add(Var, Var),
    Mul(Var, Var),
    LayerNorm {
        x: Var,
        g: Var,
        b: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Interleave3 {
        parts: [Var; 3],
        steps: usize,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
        end: usize,
    },
    Attention {
        qkv: Var,
        shape: attention::Shape,
        probs: Vec<S>,
    },
    CausalConv1d {
        x: Var,
        w: Var,
        b: Var,
        batch: usize,
        seq: usize,
    },
    Scan {
        inputs: scan::Inputs,
        shape: scan::Shape,
        states: Vec<S>,
    },
    Dropout {
        x: Var,
        mask: Vec<S>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<S>,
        count: usize,
    },
    WeightedSum {
        x: Var,
        weights: Vec<S>,
    },
}

struct Node<S> {
    shape: Vec<usize>,
    value: Vec<S>,
    grad: Vec<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// A single forward pass recorded for differentiation.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn cols_of(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&1)
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, op: Op<S>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: Vec::new(),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, shape: &[usize], value: Vec<S>) -> Var {
        self.push(shape.to_vec(), value, Op::Leaf, true)
    }

    /// A leaf without gradient.
    pub fn constant(&mut self, shape: &[usize], value: Vec<S>) -> Var {
        self.push(shape.to_vec(), value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Gradient after [`Graph::backward`]; zeros for nodes that were not
    /// reached.
    pub fn grad(&self, v: Var) -> Vec<S> {
        let n = &self.nodes[v.0];
        if n.grad.is_empty() {
            vec![S::zero(); n.value.len()]
        } else {
            n.grad.clone()
        }
    }

    pub fn scalar(&self, v: Var) -> S {
        self.nodes[v.0].value[0]
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let c = cols_of(&self.nodes[v.0].shape);
        (self.nodes[v.0].value.len() / c.max(1), c)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let wshape = self.shape(w).to_vec();
        if wshape.len() != 2 {
            return Err(Error::Shape(format!("linear weight must be 2-D, got {wshape:?}")));
        }
        let (fan_in, fan_out) = (wshape[0], wshape[1]);
        let xlen = self.value(x).len();
        if !xlen.is_multiple_of(fan_in) {
            return Err(Error::Shape(format!("{xlen} inputs not divisible by fan-in {fan_in}")));
        }
        let rows = xlen / fan_in;
        let mut out = vec![S::zero(); rows * fan_out];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != fan_out {
                return Err(Error::Shape(format!("bias has {} entries, expected {fan_out}", bias.len())));
            }
            for row in out.chunks_exact_mut(fan_out) {
                row.copy_from_slice(bias);
            }
        }
        matmul(
            View::new(self.value(x), rows, fan_in),
            View::new(self.value(w), fan_in, fan_out),
            ViewMut::new(&mut out, rows, fan_out),
            S::one(),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(vec![rows, fan_out], out, Op::Linear { x, w, b }, rg))
    }

    /// 2-D convolution over an NHWC node; output is NHWC.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::Shape(format!("conv input must be NHWC, got {shape:?}")));
        }
        let geom = conv::Geometry::new(shape[0], shape[3], shape[1], shape[2], self.shape(w), stride)?;
        let out = conv::forward(&geom, conv::Input::Nhwc(self.value(x)), self.value(w), self.value(b));
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            geom.output_shape(),
            out,
            Op::Conv2d {
                src: ConvSource::Node(x),
                w,
                b,
                geom,
            },
            rg,
        ))
    }

    /// 2-D convolution straight from `u8` frames in `[n, c, h, w]` layout.
    pub fn conv2d_pixels(
        &mut self,
        pixels: Vec<u8>,
        dims: [usize; 4],
        w: Var,
        b: Var,
        stride: usize,
    ) -> Result<Var> {
        let [n, c, h, wd] = dims;
        if pixels.len() != n * c * h * wd {
            return Err(Error::Shape(format!("{} pixels for dims {dims:?}", pixels.len())));
        }
        let geom = conv::Geometry::new(n, c, h, wd, self.shape(w), stride)?;
        let out = conv::forward(&geom, conv::Input::Pixels(&pixels), self.value(w), self.value(b));
        let rg = self.rg(w) || self.rg(b);
        Ok(self.push(
            geom.output_shape(),
            out,
            Op::Conv2d {
                src: ConvSource::Pixels(pixels),
                w,
                b,
                geom,
            },
            rg,
        ))
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let out = self.value(x).iter().map(|&v| kind.apply(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Unary { x, kind }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Gelu)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Silu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    fn same_len(&self, a: Var, b: Var) -> Result<()> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::Mul(a, b), rg))
    }

    /// Normalizes each row over the feature axis, then applies gain and bias.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var, eps: f64) -> Result<Var> {
        let (rows, d) = self.rows_cols(x);
        if self.value(g).len() != d || self.value(b).len() != d {
            return Err(Error::Shape(format!("layer norm over {d} features")));
        }
        let eps = S::from_f64c(eps);
        let inv_d = S::from_f64c(1.0 / d as f64);
        let mut xhat = vec![S::zero(); rows * d];
        let mut rstd = vec![S::zero(); rows];
        let mut out = vec![S::zero(); rows * d];
        let (xv, gv, bv) = (self.value(x), self.value(g), self.value(b));
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<S>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_d;
            let rs = S::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv[j] + bv[j];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(g) || self.rg(b);
        Ok(self.push(shape, out, Op::LayerNorm { x, g, b, xhat, rstd }, rg))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = self.rows_cols(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Shape(format!("embedding id {id} ≥ table size {vocab}")));
            }
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Interleaves three `[B·K, d]` token streams into `[B·3K, d]` with
    /// per-step order (first, second, third).
    pub fn interleave3(&mut self, parts: [Var; 3], steps: usize) -> Result<Var> {
        let (rows, d) = self.rows_cols(parts[0]);
        for p in &parts[1..] {
            if self.rows_cols(*p) != (rows, d) {
                return Err(Error::Shape("interleaved streams differ in shape".into()));
            }
        }
        if steps == 0 || rows % steps != 0 {
            return Err(Error::Shape(format!("{rows} rows are not a multiple of {steps} steps")));
        }
        let mut out = vec![S::zero(); 3 * rows * d];
        for (p, part) in parts.iter().enumerate() {
            let src = self.value(*part);
            for r in 0..rows {
                let dst = interleaved_row(r, p, steps);
                out[dst * d..(dst + 1) * d].copy_from_slice(&src[r * d..(r + 1) * d]);
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(vec![3 * rows, d], out, Op::Interleave3 { parts, steps }, rg))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (n, d) = self.rows_cols(x);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(Error::Shape(format!("row {r} ≥ {n}")));
            }
            out.extend_from_slice(&xv[r * d..(r + 1) * d]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            vec![rows.len(), d],
            out,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, d) = self.rows_cols(x);
        if start >= end || end > d {
            return Err(Error::Shape(format!("column slice {start}..{end} of {d}")));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            out.extend_from_slice(&xv[r * d + start..r * d + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![n, end - start], out, Op::SliceCols { x, start, end }, rg))
    }

    /// Causal multi-head attention over packed `[B·T, 3d]` query/key/value
    /// projections. Keys flagged in `key_pad` are hidden from every query
    /// but their own.
    pub fn attention(&mut self, qkv: Var, batch: usize, seq: usize, heads: usize, key_pad: Option<&[bool]>) -> Result<Var> {
        let (rows, three_d) = self.rows_cols(qkv);
        if rows != batch * seq || three_d % 3 != 0 || (three_d / 3) % heads != 0 {
            return Err(Error::Shape(format!("attention over {rows}×{three_d} with {batch}×{seq}, {heads} heads")));
        }
        if key_pad.is_some_and(|k| k.len() != rows) {
            return Err(Error::Shape("key padding mask length".into()));
        }
        let shape = attention::Shape {
            batch,
            seq,
            heads,
            d: three_d / 3,
        };
        let (out, probs) = attention::forward(&shape, self.value(qkv), key_pad);
        let rg = self.rg(qkv);
        Ok(self.push(
            vec![rows, shape.d],
            out,
            Op::Attention { qkv, shape, probs },
            rg,
        ))
    }

    /// Depthwise causal convolution along time for `[B·T, C]` input with
    /// kernel `[C, k]`.
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var, batch: usize, seq: usize) -> Result<Var> {
        let (rows, c) = self.rows_cols(x);
        let wshape = self.shape(w);
        if rows != batch * seq || wshape.len() != 2 || wshape[0] != c || self.value(b).len() != c {
            return Err(Error::Shape("causal conv1d".into()));
        }
        let k = wshape[1];
        let out = conv::causal1d_forward(self.value(x), self.value(w), self.value(b), batch, seq, c, k);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(vec![rows, c], out, Op::CausalConv1d { x, w, b, batch, seq }, rg))
    }

    /// Selective state-space scan; see [`scan`].
    pub fn selective_scan(&mut self, inputs: scan::Inputs, batch: usize, seq: usize) -> Result<Var> {
        let (rows, e) = self.rows_cols(inputs.x);
        let (ae, n) = self.rows_cols(inputs.a_log);
        let ok = rows == batch * seq
            && self.rows_cols(inputs.delta) == (rows, e)
            && ae == e
            && self.rows_cols(inputs.b) == (rows, n)
            && self.rows_cols(inputs.c) == (rows, n)
            && self.value(inputs.d).len() == e;
        if !ok {
            return Err(Error::Shape("selective scan operands".into()));
        }
        let shape = scan::Shape {
            batch,
            seq,
            channels: e,
            state: n,
        };
        let a: Vec<S> = self.value(inputs.a_log).iter().map(|&v| -v.exp()).collect();
        let (out, states) = scan::forward(
            &shape,
            scan::Operands {
                x: self.value(inputs.x),
                delta: self.value(inputs.delta),
                a: &a,
                b: self.value(inputs.b),
                c: self.value(inputs.c),
                d: self.value(inputs.d),
            },
        );
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "selective scan",
                step: (i / e) % seq,
            });
        }
        let rg = [inputs.x, inputs.delta, inputs.a_log, inputs.b, inputs.c, inputs.d]
            .iter()
            .any(|v| self.rg(*v));
        Ok(self.push(vec![rows, e], out, Op::Scan { inputs, shape, states }, rg))
    }

    /// Inverted dropout. Identity (no node) when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = S::from_f64c(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { S::zero() } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Dropout { x, mask }, rg)
    }

    /// Mean cross-entropy over the rows of `[n, M]` logits whose `mask`
    /// entry is false.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (n, m) = self.rows_cols(logits);
        if targets.len() != n || mask.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", targets.len())));
        }
        let count = mask.iter().filter(|p| !**p).count();
        if count == 0 {
            return Err(Error::AllMasked);
        }
        let lv = self.value(logits);
        let mut probs = vec![S::zero(); n * m];
        let mut total = 0.0f64;
        for r in 0..n {
            if mask[r] {
                continue;
            }
            if targets[r] >= m {
                return Err(Error::Shape(format!("target {} ≥ {m} classes", targets[r])));
            }
            let row = &lv[r * m..(r + 1) * m];
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let z: S = row.iter().map(|&v| (v - max).exp()).sum();
            for j in 0..m {
                probs[r * m + j] = (row[j] - max).exp() / z;
            }
            total += (z.ln() + max - row[targets[r]]).f64();
        }
        let loss = S::from_f64c(total / count as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// `Σ x_i · w_i`, a scalar probe for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<S>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::Shape("weighted sum".into()));
        }
        let total: f64 = self.value(x).iter().zip(&weights).map(|(&a, &b)| (a * b).f64()).sum();
        let rg = self.rg(x);
        Ok(self.push(vec![1], vec![S::from_f64c(total)], Op::WeightedSum { x, weights }, rg))
    }

    fn take_grad(&mut self, v: Var) -> Vec<S> {
        let node = &mut self.nodes[v.0];
        if node.grad.is_empty() {
            vec![S::zero(); node.value.len()]
        } else {
            std::mem::take(&mut node.grad)
        }
    }

    fn put_grad(&mut self, v: Var, g: Vec<S>) {
        self.nodes[v.0].grad = g;
    }

    fn accumulate(&mut self, v: Var, contrib: &[S]) {
        if !self.rg(v) {
            return;
        }
        let node = &mut self.nodes[v.0];
        if node.grad.is_empty() {
            node.grad = contrib.to_vec();
        } else {
            node.grad.iter_mut().zip(contrib).for_each(|(g, &c)| *g = *g + c);
        }
    }

    /// Which side of the kink each ReLU input lies on, over every ReLU
    /// in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Unary { x, kind: Unary::Relu } = node.op {
                out.extend(self.value(x).iter().map(|&v| v > S::zero()));
            }
        }
        out
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&mut self, out: Var) {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        for n in &mut self.nodes {
            n.grad.clear();
        }
        self.nodes[out.0].grad = vec![S::one()];
        for i in (0..=out.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].grad.is_empty() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let dy = std::mem::take(&mut self.nodes[i].grad);
            self.backprop(Var(i), &op, &dy);
            self.nodes[i].op = op;
            self.nodes[i].grad = dy;
        }
    }

    fn backprop(&mut self, node: Var, op: &Op<S>, dy: &[S]) {
        match op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (fan_in, fan_out) = (self.shape(*w)[0], self.shape(*w)[1]);
                let rows = dy.len() / fan_out;
                if self.rg(*x) {
                    let mut dx = vec![S::zero(); rows * fan_in];
                    matmul(
                        View::new(dy, rows, fan_out),
                        View::new(self.value(*w), fan_in, fan_out).t(),
                        ViewMut::new(&mut dx, rows, fan_in),
                        S::zero(),
                    );
                    self.accumulate(*x, &dx);
                }
                if self.rg(*w) {
                    let mut dw = self.take_grad(*w);
                    matmul(
                        View::new(self.value(*x), rows, fan_in).t(),
                        View::new(dy, rows, fan_out),
                        ViewMut::new(&mut dw, fan_in, fan_out),
                        S::one(),
                    );
                    self.put_grad(*w, dw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut db = vec![S::zero(); fan_out];
                        for row in dy.chunks_exact(fan_out) {
                            db.iter_mut().zip(row).for_each(|(g, &v)| *g = *g + v);
                        }
                        self.accumulate(*b, &db);
                    }
                }
            }
            Op::Conv2d { src, w, b, geom } => {
                let mut dw = self.take_grad(*w);
                let mut db = self.take_grad(*b);
                let want_dx = matches!(src, ConvSource::Node(x) if self.rg(*x));
                let mut dx = if want_dx {
                    vec![S::zero(); geom.input_len()]
                } else {
                    Vec::new()
                };
                {
                    let input = match src {
                        ConvSource::Node(x) => conv::Input::Nhwc(self.value(*x)),
                        ConvSource::Pixels(p) => conv::Input::Pixels(p),
                    };
                    conv::backward(
                        geom,
                        input,
                        self.value(*w),
                        dy,
                        &mut dw,
                        &mut db,
                        if want_dx { Some(&mut dx) } else { None },
                    );
                }
                if self.rg(*w) {
                    self.put_grad(*w, dw);
                }
                if self.rg(*b) {
                    self.put_grad(*b, db);
                }
                if let (true, ConvSource::Node(x)) = (want_dx, src) {
                    self.accumulate(*x, &dx);
                }
            }
            Op::Unary { x, kind } => {
                let xv = self.value(*x);
                let yv = self.value(node);
                let dx: Vec<S> = dy
                    .iter()
                    .zip(xv.iter().zip(yv))
                    .map(|(&g, (&a, &y))| g * kind.derivative(a, y))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, dy);
                self.accumulate(*b, dy);
            }
            Op::Mul(a, b) => {
                let da: Vec<S> = dy.iter().zip(self.value(*b)).map(|(&g, &v)| g * v).collect();
                let db: Vec<S> = dy.iter().zip(self.value(*a)).map(|(&g, &v)| g * v).collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::LayerNorm { x, g, b, xhat, rstd } => {
                let d = self.value(*g).len();
                let rows = dy.len() / d;
                let gv = self.value(*g).to_vec();
                let mut dg = vec![S::zero(); d];
                let mut db = vec![S::zero(); d];
                let mut dx = vec![S::zero(); rows * d];
                let inv_d = S::from_f64c(1.0 / d as f64);
                for r in 0..rows {
                    let dyr = &dy[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mut sum_dh = S::zero();
                    let mut sum_dh_xh = S::zero();
                    for j in 0..d {
                        dg[j] = dg[j] + dyr[j] * xh[j];
                        db[j] = db[j] + dyr[j];
                        let dh = dyr[j] * gv[j];
                        sum_dh = sum_dh + dh;
                        sum_dh_xh = sum_dh_xh + dh * xh[j];
                    }
                    for j in 0..d {
                        let dh = dyr[j] * gv[j];
                        dx[r * d + j] = rstd[r] * (dh - inv_d * sum_dh - xh[j] * inv_d * sum_dh_xh);
                    }
                }
                self.accumulate(*x, &dx);
                self.accumulate(*g, &dg);
                self.accumulate(*b, &db);
            }
            Op::Embedding { table, ids } => {
                if self.rg(*table) {
                    let d = cols_of(self.shape(*table));
                    let mut dt = self.take_grad(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] = dt[id * d + j] + dy[r * d + j];
                        }
                    }
                    self.put_grad(*table, dt);
                }
            }
            Op::Interleave3 { parts, steps } => {
                let (rows, d) = self.rows_cols(parts[0]);
                for (p, part) in parts.iter().enumerate() {
                    if !self.rg(*part) {
                        continue;
                    }
                    let mut dp = vec![S::zero(); rows * d];
                    for r in 0..rows {
                        let src = interleaved_row(r, p, *steps);
                        dp[r * d..(r + 1) * d].copy_from_slice(&dy[src * d..(src + 1) * d]);
                    }
                    self.accumulate(*part, &dp);
                }
            }
            Op::SelectRows { x, rows } => {
                if self.rg(*x) {
                    let d = cols_of(self.shape(*x));
                    let mut dx = self.take_grad(*x);
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..d {
                            dx[r * d + j] = dx[r * d + j] + dy[i * d + j];
                        }
                    }
                    self.put_grad(*x, dx);
                }
            }
            Op::SliceCols { x, start, end } => {
                if self.rg(*x) {
                    let (n, d) = self.rows_cols(*x);
                    let w = end - start;
                    let mut dx = self.take_grad(*x);
                    for r in 0..n {
                        for j in 0..w {
                            let t = r * d + start + j;
                            dx[t] = dx[t] + dy[r * w + j];
                        }
                    }
                    self.put_grad(*x, dx);
                }
            }
            Op::Attention { qkv, shape, probs } => {
                let dqkv = attention::backward(shape, self.value(*qkv), probs, dy);
                self.accumulate(*qkv, &dqkv);
            }
            Op::CausalConv1d { x, w, b, batch, seq } => {
                let (_, c) = self.rows_cols(*x);
                let k = self.shape(*w)[1];
                let (dx, dw, db) = conv::causal1d_backward(self.value(*x), self.value(*w), dy, *batch, *seq, c, k);
                self.accumulate(*x, &dx);
                self.accumulate(*w, &dw);
                self.accumulate(*b, &db);
            }
            Op::Scan { inputs, shape, states } => {
                let a: Vec<S> = self.value(inputs.a_log).iter().map(|&v| -v.exp()).collect();
                let grads = scan::backward(
                    shape,
                    scan::Operands {
                        x: self.value(inputs.x),
                        delta: self.value(inputs.delta),
                        a: &a,
                        b: self.value(inputs.b),
                        c: self.value(inputs.c),
                        d: self.value(inputs.d),
                    },
                    states,
                    dy,
                );
                // A = -exp(a_log), so dA/da_log = A.
                let da_log: Vec<S> = grads.a.iter().zip(&a).map(|(&g, &av)| g * av).collect();
                self.accumulate(inputs.x, &grads.x);
                self.accumulate(inputs.delta, &grads.delta);
                self.accumulate(inputs.a_log, &da_log);
                self.accumulate(inputs.b, &grads.b);
                self.accumulate(inputs.c, &grads.c);
                self.accumulate(inputs.d, &grads.d);
            }
            Op::Dropout { x, mask } => {
                let dx: Vec<S> = dy.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                self.accumulate(*x, &dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let m = cols_of(self.shape(*logits));
                let scale = dy[0] / S::from_f64c(*count as f64);
                let mut dl = vec![S::zero(); probs.len()];
                for (r, &masked) in mask.iter().enumerate() {
                    if masked {
                        continue;
                    }
                    for j in 0..m {
                        dl[r * m + j] = probs[r * m + j] * scale;
                    }
                    dl[r * m + targets[r]] = dl[r * m + targets[r]] - scale;
                }
                self.accumulate(*logits, &dl);
            }
            Op::WeightedSum { x, weights } => {
                let dx: Vec<S> = weights.iter().map(|&w| w * dy[0]).collect();
                self.accumulate(*x, &dx);
            }
        }
    }
}

/// Row of stream `part` (0, 1, 2) for source row `r` of a `[B·K]` stream.
fn interleaved_row(r: usize, part: usize, steps: usize) -> usize {
    let (b, t) = (r / steps, r % steps);
    b * 3 * steps + 3 * t + part
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_layout() {
        let mut g = Graph::<f64>::new();
        let r = g.constant(&[2, 1], vec![1.0, 2.0]);
        let s = g.constant(&[2, 1], vec![10.0, 20.0]);
        let a = g.constant(&[2, 1], vec![100.0, 200.0]);
        let out = g.interleave3([r, s, a], 2).unwrap();
        assert_eq!(g.value(out), &[1.0, 10.0, 100.0, 2.0, 20.0, 200.0]);
        let out = g.interleave3([r, s, a], 1).unwrap();
        assert_eq!(g.value(out), &[1.0, 10.0, 100.0, 2.0, 20.0, 200.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(&[2, 4], vec![0.3; 8]);
        let loss = g.cross_entropy(l, &[1, 3], &[false, false]).unwrap();
        assert!((g.scalar(loss) - 4f64.ln()).abs() < 1e-12);
        assert!(matches!(g.cross_entropy(l, &[1, 3], &[true, true]), Err(Error::AllMasked)));
    }

    #[test]
    fn softplus_is_positive_and_stable() {
        for x in [-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0] {
            let y: f64 = softplus(x);
            assert!(y > 0.0 || x < -700.0, "{x}");
            assert!(y.is_finite());
        }
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }
}
