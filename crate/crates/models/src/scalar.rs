use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of the engine. Training runs in `f32`;
/// gradient checks can run the same code in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    /// `c = alpha · a · b + beta · c` for an `m × k` by `k × n` product with
    /// arbitrary element strides.
    ///
    /// # Safety
    /// Every element addressed through the strides must lie inside the
    /// given slices; callers go through [`matmul`], which checks this.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        gemm::gemm(
            m,
            n,
            k,
            c,
            csc,
            rsc,
            beta != Self::zero(),
            a,
            csa,
            rsa,
            b,
            csb,
            rsb,
            beta,
            alpha,
            false,
            false,
            false,
            gemm::Parallelism::None,
        )
    }

    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every scalar type")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalars convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A strided read-only matrix view.
#[derive(Clone, Copy)]
pub struct View<'a, S> {
    pub data: &'a [S],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, S> View<'a, S> {
    /// Row-major `rows × cols` matrix.
    pub fn new(data: &'a [S], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    /// Sub-block starting at `(row, col)`.
    pub fn block(self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self {
            offset: self.offset + row * self.row_stride + col * self.col_stride,
            rows,
            cols,
            ..self
        }
    }

    pub fn with_stride(mut self, row_stride: usize) -> Self {
        self.row_stride = row_stride;
        self
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
    }
}

/// A strided mutable matrix view.
pub struct ViewMut<'a, S> {
    pub data: &'a mut [S],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, S> ViewMut<'a, S> {
    pub fn new(data: &'a mut [S], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn block(self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self {
            offset: self.offset + row * self.row_stride + col * self.col_stride,
            rows,
            cols,
            ..self
        }
    }

    pub fn with_stride(mut self, row_stride: usize) -> Self {
        self.row_stride = row_stride;
        self
    }
}

/// `c = a · b + beta · c`.
pub fn matmul<S: Scalar>(a: View<S>, b: View<S>, c: ViewMut<S>, beta: S) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape mismatch");
    assert!(a.last_index() < a.data.len().max(1) || a.rows * a.cols == 0);
    assert!(b.last_index() < b.data.len().max(1) || b.rows * b.cols == 0);
    let c_last = if c.rows * c.cols == 0 {
        c.offset
    } else {
        c.offset + (c.rows - 1) * c.row_stride + (c.cols - 1) * c.col_stride
    };
    assert!(c_last < c.data.len().max(1) || c.rows * c.cols == 0);
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: all addressed elements were bounds-checked above.
    unsafe {
        S::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            S::one(),
            a.data.as_ptr().add(a.offset),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.row_stride as isize,
            c.col_stride as isize,
        )
    }
}
