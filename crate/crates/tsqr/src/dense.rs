//! Column-major dense matrices, deterministic generators, and error metrics.
//!
//! Storage is column-major with leading dimension equal to the row count, so
//! a column is a contiguous slice. All generators are deterministic: the same
//! `(rows, cols, seed, mode)` always produces bitwise-identical output.

use crate::error::{Error, Result};
use crate::flops;
use crate::triangular::UpperTriangular;

/// An m-by-n real matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wrap column-major data. `data.len()` must equal `rows * cols` and both
    /// dimensions must be at least 1.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("DenseMatrix::new", "rows and cols must be >= 1"));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "DenseMatrix::new",
                format!("data length {} != {}x{}", data.len(), rows, cols),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row + col * self.rows]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row + col * self.rows] = value;
    }

    /// Column `col` as a contiguous slice.
    pub fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// Copy of the row block `[row0, row0 + height)`.
    pub fn row_block(&self, row0: usize, height: usize) -> Self {
        assert!(row0 + height <= self.rows && height >= 1);
        let mut out = Self::zeros(height, self.cols);
        for c in 0..self.cols {
            let src = &self.col(c)[row0..row0 + height];
            out.col_mut(c).copy_from_slice(src);
        }
        out
    }

    /// Write `block` into rows `[row0, row0 + block.rows)` of `self`.
    pub fn set_row_block(&mut self, row0: usize, block: &DenseMatrix) {
        assert!(block.cols == self.cols && row0 + block.rows <= self.rows);
        for c in 0..self.cols {
            self.col_mut(c)[row0..row0 + block.rows].copy_from_slice(block.col(c));
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// `self * other`, plain triple loop over columns.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let mut executed = 0u64;
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a_col = self.col(k);
                let o_col = out.col_mut(j);
                for i in 0..self.rows {
                    o_col[i] += a_col[i] * b;
                }
                executed += 2 * self.rows as u64;
            }
        }
        flops::add(executed);
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Largest `|self - other|` entry; the matrices must conform.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert!(self.rows == other.rows && self.cols == other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Euclidean norm with scaling against overflow/underflow, in the style of
/// the classic reference BLAS `dnrm2`.
pub fn norm2(x: &[f64]) -> f64 {
    let mut scale = 0.0f64;
    let mut ssq = 1.0f64;
    for &v in x {
        if v != 0.0 {
            let a = v.abs();
            if scale < a {
                let t = scale / a;
                ssq = 1.0 + ssq * t * t;
                scale = a;
            } else {
                let t = a / scale;
                ssq += t * t;
            }
        }
    }
    flops::add(2 * x.len() as u64);
    scale * ssq.sqrt()
}

/// How [`gen_matrix`] fills the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenMode {
    /// Independent standard-normal entries.
    StandardNormal,
    /// Singular values geometrically spaced from 1 down to `1/kappa`, with
    /// random orthogonal factors, so the condition number is `kappa`.
    GeometricCond(f64),
}

/// Deterministic test/benchmark matrix generator.
///
/// Requires `rows >= cols >= 1` (the library only deals in tall panels) and
/// `kappa >= 1` for [`GenMode::GeometricCond`].
pub fn gen_matrix(rows: usize, cols: usize, seed: u64, mode: GenMode) -> Result<DenseMatrix> {
    if cols < 1 || rows < cols {
        return Err(Error::dim(
            "gen_matrix",
            format!("need rows >= cols >= 1, got {rows}x{cols}"),
        ));
    }
    match mode {
        GenMode::StandardNormal => {
            let mut rng = Rng::new(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
            DenseMatrix::new(rows, cols, data)
        }
        GenMode::GeometricCond(kappa) => {
            if !kappa.is_finite() || kappa < 1.0 {
                return Err(Error::dim(
                    "gen_matrix",
                    format!("geometric-cond needs finite kappa >= 1, got {kappa}"),
                ));
            }
            // A = U diag(sigma) V^T with U, V drawn as Q factors of normal
            // matrices; sigma_i = kappa^(-i/(n-1)).
            let u_raw = gen_matrix(rows, cols, seed.wrapping_add(1), GenMode::StandardNormal)?;
            let v_raw = gen_matrix(cols, cols, seed.wrapping_add(2), GenMode::StandardNormal)?;
            let u = crate::householder::form_q_panel(&crate::householder::householder_qr(
                &u_raw,
                crate::householder::QrVariant::Unblocked,
            )?);
            let v = crate::householder::form_q_panel(&crate::householder::householder_qr(
                &v_raw,
                crate::householder::QrVariant::Unblocked,
            )?);
            let mut scaled = u;
            for j in 0..cols {
                let sigma = if cols == 1 {
                    1.0
                } else {
                    kappa.powf(-(j as f64) / (cols as f64 - 1.0))
                };
                for v in scaled.col_mut(j) {
                    *v *= sigma;
                }
            }
            scaled.matmul(&v.transpose())
        }
    }
}

/// `||a - q r||_F / ||a||_F`.
pub fn backward_error(a: &DenseMatrix, q: &DenseMatrix, r: &UpperTriangular) -> Result<f64> {
    if q.rows() != a.rows() || q.cols() != r.n() || r.n() != a.cols() {
        return Err(Error::dim(
            "backward_error",
            format!(
                "a {}x{}, q {}x{}, r {}x{}",
                a.rows(),
                a.cols(),
                q.rows(),
                q.cols(),
                r.n(),
                r.n()
            ),
        ));
    }
    let qr = q.matmul(&r.to_dense())?;
    let diff: Vec<f64> = a.data().iter().zip(qr.data()).map(|(x, y)| x - y).collect();
    let num = norm2(&diff);
    let den = a.frobenius_norm();
    Ok(if den == 0.0 { num } else { num / den })
}

/// `||q^T q - I||_F`.
pub fn orthogonality(q: &DenseMatrix) -> f64 {
    let qtq = q.transpose().matmul(q).expect("square product");
    let n = qtq.rows();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            let expect = if i == j { 1.0 } else { 0.0 };
            let d = qtq.get(i, j) - expect;
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// Deterministic splitmix64 stream with a Box-Muller normal transform.
pub(crate) struct Rng {
    state: u64,
    spare: Option<f64>,
}

impl Rng {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare: None,
        }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1].
    pub(crate) fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64
    }

    pub(crate) fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `[0, bound)`.
    pub(crate) fn below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }
}
