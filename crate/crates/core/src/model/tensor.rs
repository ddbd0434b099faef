//! Row-major dense matrices and the handful of GEMM shapes the network needs.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type. Training runs in `f32`; gradient checks
/// instantiate the same code with `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `C = alpha * A B + beta * C` with arbitrary strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and
    /// `m x n` matrices.
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
    );

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn cast<G: Real>(&self) -> Matrix<G> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|x| G::from_f64(x.to_f64().expect("finite")).expect("finite"))
                .collect(),
        }
    }

    /// Gathers rows by index.
    pub fn gather_rows(&self, ids: &[u32]) -> Matrix<F> {
        let mut out = Matrix::zeros(ids.len(), self.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(id as usize));
        }
        out
    }

    /// Appends zero rows.
    pub fn grow_rows(&mut self, extra: usize) {
        self.data
            .extend(std::iter::repeat_n(F::zero(), extra * self.cols));
        self.rows += extra;
    }

    /// Concatenates two matrices with equal row counts side by side.
    pub fn hcat(a: &Matrix<F>, b: &Matrix<F>) -> Matrix<F> {
        assert_eq!(a.rows, b.rows);
        let cols = a.cols + b.cols;
        let mut out = Matrix::zeros(a.rows, cols);
        for r in 0..a.rows {
            let row = out.row_mut(r);
            row[..a.cols].copy_from_slice(a.row(r));
            row[a.cols..].copy_from_slice(b.row(r));
        }
        out
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn col_slice(&self, start: usize, width: usize) -> Matrix<F> {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix<F>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn mul_assign_elementwise(&mut self, other: &Matrix<F>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sum_sq(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc + x * x)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = a * b + beta * c`
pub fn gemm_nn<F: Real>(a: &Matrix<F>, b: &Matrix<F>, c: &mut Matrix<F>, beta: F) {
    assert_eq!(a.cols, b.rows, "gemm_nn inner dims");
    assert_eq!((c.rows, c.cols), (a.rows, b.cols), "gemm_nn output");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: shapes checked above; row-major contiguous storage.
    unsafe {
        F::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            F::one(),
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        )
    }
}

/// `c = a * b^T + beta * c`
pub fn gemm_nt<F: Real>(a: &Matrix<F>, b: &Matrix<F>, c: &mut Matrix<F>, beta: F) {
    assert_eq!(a.cols, b.cols, "gemm_nt inner dims");
    assert_eq!((c.rows, c.cols), (a.rows, b.rows), "gemm_nt output");
    if a.rows == 0 || b.rows == 0 {
        return;
    }
    // SAFETY: b^T is read through swapped strides of b's row-major storage.
    unsafe {
        F::gemm_raw(
            a.rows,
            a.cols,
            b.rows,
            F::one(),
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            1,
            b.cols as isize,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        )
    }
}

/// `c += a^T * b`
pub fn gemm_tn_acc<F: Real>(a: &Matrix<F>, b: &Matrix<F>, c: &mut Matrix<F>) {
    assert_eq!(a.rows, b.rows, "gemm_tn inner dims");
    assert_eq!((c.rows, c.cols), (a.cols, b.cols), "gemm_tn output");
    if a.rows == 0 {
        return;
    }
    // SAFETY: a^T is read through swapped strides of a's row-major storage.
    unsafe {
        F::gemm_raw(
            a.cols,
            a.rows,
            b.cols,
            F::one(),
            a.data.as_ptr(),
            1,
            a.cols as isize,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            F::one(),
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        )
    }
}

pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}
