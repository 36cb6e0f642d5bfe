//! im2col convolutions over NHWC activations (or raw `u8` CHW frames) and
//! the depthwise causal 1-D convolution.

use crate::scalar::{matmul, Scalar, View, ViewMut};
use crate::{Error, Result};

/// Upper bound on the im2col buffer, in elements.
const CHUNK_ELEMS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub frames: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Geometry {
    /// `weight_shape` is `[k·k·c_in, c_out]` with patch order `(ky, kx, c)`.
    pub fn new(
        frames: usize,
        in_channels: usize,
        height: usize,
        width: usize,
        weight_shape: &[usize],
        stride: usize,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::Shape(m));
        if weight_shape.len() != 2 || in_channels == 0 || stride == 0 {
            return bad(format!("conv weight {weight_shape:?}"));
        }
        let kk = weight_shape[0] / in_channels;
        let kernel = (kk as f64).sqrt().round() as usize;
        if kernel * kernel * in_channels != weight_shape[0] || kernel > height || kernel > width {
            return bad(format!("conv weight {weight_shape:?} for {in_channels}×{height}×{width} input"));
        }
        Ok(Self {
            frames,
            in_channels,
            height,
            width,
            kernel,
            stride,
            out_channels: weight_shape[1],
            out_height: (height - kernel) / stride + 1,
            out_width: (width - kernel) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    pub fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn input_len(&self) -> usize {
        self.frames * self.height * self.width * self.in_channels
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.frames, self.out_height, self.out_width, self.out_channels]
    }

    fn chunk_frames(&self) -> usize {
        (CHUNK_ELEMS / (self.positions() * self.patch_len())).max(1)
    }
}

#[derive(Clone, Copy)]
pub enum Input<'a, S> {
    Nhwc(&'a [S]),
    /// `[n, c, h, w]` bytes scaled by 1/255.
    Pixels(&'a [u8]),
}

/// Frames `first..first + count` as contiguous NHWC values. `u8` input
/// is converted into `stage`.
fn nhwc_frames<'a, S: Scalar>(
    g: &Geometry,
    input: Input<'a, S>,
    first: usize,
    count: usize,
    stage: &'a mut Vec<S>,
    lut: &[S; 256],
) -> &'a [S] {
    let frame_len = g.height * g.width * g.in_channels;
    match input {
        Input::Nhwc(v) => &v[first * frame_len..(first + count) * frame_len],
        Input::Pixels(p) => {
            let (c, plane) = (g.in_channels, g.height * g.width);
            stage.resize(count * frame_len, S::zero());
            for f in 0..count {
                let src = &p[(first + f) * frame_len..(first + f + 1) * frame_len];
                let dst = &mut stage[f * frame_len..(f + 1) * frame_len];
                for ch in 0..c {
                    for (i, &b) in src[ch * plane..(ch + 1) * plane].iter().enumerate() {
                        dst[i * c + ch] = lut[b as usize];
                    }
                }
            }
            stage
        }
    }
}

/// Patch rows for `count` NHWC frames. Within a kernel row the `(kx, c)`
/// block is contiguous in both the input and the patch.
fn im2col<S: Scalar>(g: &Geometry, frames: &[S], count: usize, cols: &mut [S]) {
    let (k, s, c) = (g.kernel, g.stride, g.in_channels);
    let (patch, span) = (g.patch_len(), k * c);
    for f in 0..count {
        for oy in 0..g.out_height {
            for ox in 0..g.out_width {
                let row = (f * g.positions() + oy * g.out_width + ox) * patch;
                for ky in 0..k {
                    let src = ((f * g.height + oy * s + ky) * g.width + ox * s) * c;
                    let dst = row + ky * span;
                    cols[dst..dst + span].copy_from_slice(&frames[src..src + span]);
                }
            }
        }
    }
}

fn col2im<S: Scalar>(g: &Geometry, first: usize, count: usize, cols: &[S], dx: &mut [S]) {
    let (k, s, c) = (g.kernel, g.stride, g.in_channels);
    let patch = g.patch_len();
    for f in 0..count {
        let frame = first + f;
        for oy in 0..g.out_height {
            for ox in 0..g.out_width {
                let row = (f * g.positions() + oy * g.out_width + ox) * patch;
                for ky in 0..k {
                    let src = row + ky * k * c;
                    let dst = ((frame * g.height + oy * s + ky) * g.width + ox * s) * c;
                    for (d, &v) in dx[dst..dst + k * c].iter_mut().zip(&cols[src..src + k * c]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

fn pixel_lut<S: Scalar>() -> [S; 256] {
    std::array::from_fn(|i| S::from_f64c(i as f64 / 255.0))
}

pub fn forward<S: Scalar>(g: &Geometry, input: Input<S>, w: &[S], b: &[S]) -> Vec<S> {
    let (pos, patch, co) = (g.positions(), g.patch_len(), g.out_channels);
    let lut = pixel_lut::<S>();
    let mut out = vec![S::zero(); g.frames * pos * co];
    for row in out.chunks_exact_mut(co) {
        row.copy_from_slice(b);
    }
    let step = g.chunk_frames();
    let mut cols = vec![S::zero(); step.min(g.frames) * pos * patch];
    let mut stage = Vec::new();
    let mut first = 0;
    while first < g.frames {
        let count = step.min(g.frames - first);
        let rows = count * pos;
        let frames = nhwc_frames(g, input, first, count, &mut stage, &lut);
        im2col(g, frames, count, &mut cols);
        let dst = &mut out[first * pos * co..(first + count) * pos * co];
        matmul(
            View::new(&cols[..rows * patch], rows, patch),
            View::new(w, patch, co),
            ViewMut::new(dst, rows, co),
            S::one(),
        );
        first += count;
    }
    out
}

/// Accumulates weight and bias gradients (and the input gradient when
/// `dx` is given) for output gradient `dy`.
pub fn backward<S: Scalar>(
    g: &Geometry,
    input: Input<S>,
    w: &[S],
    dy: &[S],
    dw: &mut [S],
    db: &mut [S],
    mut dx: Option<&mut [S]>,
) {
    let (pos, patch, co) = (g.positions(), g.patch_len(), g.out_channels);
    let lut = pixel_lut::<S>();
    for row in dy.chunks_exact(co) {
        db.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
    }
    let step = g.chunk_frames();
    let mut cols = vec![S::zero(); step.min(g.frames) * pos * patch];
    let mut stage = Vec::new();
    let mut first = 0;
    while first < g.frames {
        let count = step.min(g.frames - first);
        let rows = count * pos;
        let frames = nhwc_frames(g, input, first, count, &mut stage, &lut);
        im2col(g, frames, count, &mut cols);
        let dy_chunk = &dy[first * pos * co..(first + count) * pos * co];
        matmul(
            View::new(&cols[..rows * patch], rows, patch).t(),
            View::new(dy_chunk, rows, co),
            ViewMut::new(dw, patch, co),
            S::one(),
        );
        if let Some(dx) = dx.as_deref_mut() {
            let dcols = &mut cols[..rows * patch];
            matmul(
                View::new(dy_chunk, rows, co),
                View::new(w, patch, co).t(),
                ViewMut::new(dcols, rows, patch),
                S::zero(),
            );
            col2im(g, first, count, dcols, dx);
        }
        first += count;
    }
}

/// `y[b,t,c] = bias[c] + Σ_j w[c,j] · x[b, t-k+1+j, c]`, zero before t = 0.
pub fn causal1d_forward<S: Scalar>(
    x: &[S],
    w: &[S],
    bias: &[S],
    batch: usize,
    seq: usize,
    channels: usize,
    k: usize,
) -> Vec<S> {
    let mut out = vec![S::zero(); batch * seq * channels];
    for b in 0..batch {
        for t in 0..seq {
            let row = (b * seq + t) * channels;
            for c in 0..channels {
                let mut acc = bias[c];
                for j in 0..k {
                    if let Some(src) = (t + j).checked_sub(k - 1) {
                        acc = acc + w[c * k + j] * x[(b * seq + src) * channels + c];
                    }
                }
                out[row + c] = acc;
            }
        }
    }
    out
}

/// Returns `(dx, dw, dbias)`.
pub fn causal1d_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    dy: &[S],
    batch: usize,
    seq: usize,
    channels: usize,
    k: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut dx = vec![S::zero(); x.len()];
    let mut dw = vec![S::zero(); w.len()];
    let mut db = vec![S::zero(); channels];
    for b in 0..batch {
        for t in 0..seq {
            let row = (b * seq + t) * channels;
            for c in 0..channels {
                let g = dy[row + c];
                db[c] = db[c] + g;
                for j in 0..k {
                    if let Some(src) = (t + j).checked_sub(k - 1) {
                        let i = (b * seq + src) * channels + c;
                        dw[c * k + j] = dw[c * k + j] + g * x[i];
                        dx[i] = dx[i] + g * w[c * k + j];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
