//! Upper-triangular n-by-n values: the unit the reduction communicates.
//!
//! Stored dense column-major with a bitwise-zero strict lower triangle, which
//! the kernels preserve by never writing below the diagonal. A packed wire
//! encoding (`n(n+1)/2` values, upper-triangle columns concatenated) exists
//! for message accounting and file IO.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// An n-by-n upper-triangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangular {
    n: usize,
    /// Dense column-major; entries below the diagonal are exactly 0.0.
    data: Vec<f64>,
}

impl UpperTriangular {
    /// Wrap dense column-major data, rejecting any nonzero strict lower
    /// triangle (bitwise check; `-0.0` is accepted).
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("UpperTriangular::new", "n must be >= 1"));
        }
        if data.len() != n * n {
            return Err(Error::dim(
                "UpperTriangular::new",
                format!("data length {} != {n}x{n}", data.len()),
            ));
        }
        for j in 0..n {
            for i in j + 1..n {
                if data[i + j * n] != 0.0 {
                    return Err(Error::dim(
                        "UpperTriangular::new",
                        format!("nonzero strict lower entry at ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            t.set(i, i, 1.0);
        }
        t
    }

    /// Upper triangle of the leading n-by-n block of a dense matrix.
    pub fn from_dense_upper(m: &DenseMatrix) -> Result<Self> {
        let n = m.cols();
        if m.rows() < n {
            return Err(Error::dim(
                "UpperTriangular::from_dense_upper",
                format!("matrix {}x{} has fewer rows than columns", m.rows(), n),
            ));
        }
        let mut t = Self::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                t.set(i, j, m.get(i, j));
            }
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.n && col < self.n);
        self.data[row + col * self.n]
    }

    /// Write an entry on or above the diagonal. Panics below it: the strict
    /// lower triangle must stay bitwise zero.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(row <= col, "write below the diagonal at ({row}, {col})");
        self.data[row + col * self.n] = value;
    }

    /// Column slice of the stored dense data (length n).
    pub(crate) fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.n..(col + 1) * self.n]
    }

    pub(crate) fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.n..(col + 1) * self.n]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::new(self.n, self.n, self.data.clone()).expect("valid dimensions")
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::dense::norm2(&self.data)
    }

    pub fn max_abs_diff(&self, other: &UpperTriangular) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when the strict lower triangle is bitwise zero. Kernel outputs
    /// keep this by construction; tests assert it.
    pub fn strict_lower_is_zero(&self) -> bool {
        (0..self.n).all(|j| (j + 1..self.n).all(|i| self.data[i + j * self.n] == 0.0))
    }

    pub fn diag_is_nonnegative(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) >= 0.0)
    }

    /// Flip rows so every diagonal entry is nonnegative.
    ///
    /// Returns the normalized triangle and the per-row signs applied; a zero
    /// diagonal entry gets sign +1. Two R factors of the same matrix agree
    /// after this normalization (they are unique up to the sign of each row),
    /// which is what makes results from different reduction trees comparable.
    pub fn sign_normalize(&self) -> (UpperTriangular, Vec<f64>) {
        let mut out = self.clone();
        let mut signs = vec![1.0; self.n];
        for i in 0..self.n {
            if self.get(i, i) < 0.0 {
                signs[i] = -1.0;
                for j in i..self.n {
                    let v = out.get(i, j);
                    out.set(i, j, -v);
                }
            }
        }
        (out, signs)
    }

    /// Packed wire encoding: columns of the upper triangle concatenated left
    /// to right, `n(n+1)/2` values.
    pub fn to_packed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n + 1) / 2);
        for j in 0..self.n {
            out.extend_from_slice(&self.col(j)[0..=j]);
        }
        out
    }

    /// Inverse of [`Self::to_packed`].
    pub fn from_packed(n: usize, packed: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("UpperTriangular::from_packed", "n must be >= 1"));
        }
        let expect = n * (n + 1) / 2;
        if packed.len() != expect {
            return Err(Error::dim(
                "UpperTriangular::from_packed",
                format!("payload length {} != n(n+1)/2 = {expect}", packed.len()),
            ));
        }
        let mut t = Self::zeros(n);
        let mut k = 0;
        for j in 0..n {
            for i in 0..=j {
                t.set(i, j, packed[k]);
                k += 1;
            }
        }
        Ok(t)
    }

    /// Number of packed words for an n-by-n triangle.
    pub fn packed_len(n: usize) -> usize {
        n * (n + 1) / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_lower_garbage() {
        // Column-major 2x2 with a nonzero (1,0) entry.
        assert!(UpperTriangular::new(2, vec![1.0, 0.5, 2.0, 3.0]).is_err());
        assert!(UpperTriangular::new(2, vec![1.0, 0.0, 2.0, 3.0]).is_ok());
        assert!(UpperTriangular::new(0, vec![]).is_err());
    }

    #[test]
    fn sign_normalize_flips_rows() {
        // [[-2, 1], [0, 3]] -> [[2, -1], [0, 3]] with signs (-1, +1).
        let t = UpperTriangular::new(2, vec![-2.0, 0.0, 1.0, 3.0]).unwrap();
        let (nrm, signs) = t.sign_normalize();
        assert_eq!(signs, vec![-1.0, 1.0]);
        assert_eq!(nrm.get(0, 0), 2.0);
        assert_eq!(nrm.get(0, 1), -1.0);
        assert_eq!(nrm.get(1, 1), 3.0);

        let id = UpperTriangular::identity(3);
        let (nrm, signs) = id.sign_normalize();
        assert_eq!(nrm, id);
        assert_eq!(signs, vec![1.0; 3]);
    }

    #[test]
    fn sign_normalize_zero_diagonal_keeps_plus() {
        // [[0, 5], [0, -1]] -> [[0, 5], [0, 1]] with signs (+1, -1).
        let t = UpperTriangular::new(2, vec![0.0, 0.0, 5.0, -1.0]).unwrap();
        let (nrm, signs) = t.sign_normalize();
        assert_eq!(signs, vec![1.0, -1.0]);
        assert_eq!(nrm.get(0, 1), 5.0);
        assert_eq!(nrm.get(1, 1), 1.0);
    }

    #[test]
    fn packed_round_trip() {
        let t = UpperTriangular::new(3, vec![1.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0]).unwrap();
        let packed = t.to_packed();
        assert_eq!(packed, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(UpperTriangular::from_packed(3, &packed).unwrap(), t);
        assert_eq!(UpperTriangular::packed_len(50), 1275);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn triangle(max_n: usize) -> impl Strategy<Value = UpperTriangular> {
            (1..=max_n)
                .prop_flat_map(|n| {
                    (
                        Just(n),
                        proptest::collection::vec(-1e6f64..1e6, n * (n + 1) / 2),
                    )
                })
                .prop_map(|(n, packed)| UpperTriangular::from_packed(n, &packed).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn packed_encoding_round_trips_bitwise(t in triangle(24)) {
                let packed = t.to_packed();
                prop_assert_eq!(packed.len(), UpperTriangular::packed_len(t.n()));
                let back = UpperTriangular::from_packed(t.n(), &packed).unwrap();
                prop_assert_eq!(back, t);
            }

            #[test]
            fn sign_normalize_is_idempotent_and_sign_exact(t in triangle(24)) {
                let (once, signs) = t.sign_normalize();
                prop_assert!(once.diag_is_nonnegative());
                let (twice, again) = once.sign_normalize();
                prop_assert_eq!(&twice, &once);
                prop_assert!(again.iter().all(|s| *s == 1.0));
                // Flipping rows back recovers the original bits.
                let mut restored = once.clone();
                for i in 0..t.n() {
                    if signs[i] < 0.0 {
                        for j in i..t.n() {
                            let v = restored.get(i, j);
                            restored.set(i, j, -v);
                        }
                    }
                }
                prop_assert_eq!(restored, t);
            }
        }
    }
}
