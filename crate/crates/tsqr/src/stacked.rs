//! QR of two stacked upper-triangular matrices.
//!
//! The merge step of the reduction factors the 2n-by-n matrix `[r1; r2]`
//! where both blocks are upper triangular. A structure-oblivious Householder
//! code would spend about 10n³/3 flops on that shape; exploiting that the
//! reflector at step j only has to touch row j of `r1` and the leading j+1
//! rows of `r2` brings the cost down to about 2n³/3. The reflector tails
//! land exactly in the triangle of `r2`'s storage, so the transformation is
//! carried by a second upper-triangular matrix plus n scalars.
//!
//! Outputs keep the in-place storage convention of the original kernel: the
//! R factor overwrites `r1`'s slot, the Householder vectors overwrite `r2`'s.

use crate::dense::{norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::flops;
use crate::householder::ApplyDirection;
use crate::triangular::UpperTriangular;

/// The orthogonal transformation produced by one merge, in factored form.
///
/// Column j of the implicit 2n-vector reflector is `e_j` (over the top
/// block) stacked on `v[0..=j, j]` (over the bottom block), zeros elsewhere;
/// the identity part is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedFactor {
    /// Reflector tails; column j occupies rows 0..=j, so the matrix is upper
    /// triangular.
    pub v: UpperTriangular,
    /// Reflector scalars; each is 0 or lies in [1, 2].
    pub tau: Vec<f64>,
}

impl StackedFactor {
    pub fn n(&self) -> usize {
        self.v.n()
    }
}

/// R factor of `[r1; r2]` plus the transformation that produced it.
///
/// Step j builds a length-(j+2) reflector from `r1[j, j]` and the leading
/// j+1 entries of `r2`'s column j, then updates row j of `r1` and rows
/// 0..=j of `r2` across the trailing columns. Nothing below either diagonal
/// is ever written, so both triangles stay bitwise zero.
pub fn qr_uppers(
    r1: &UpperTriangular,
    r2: &UpperTriangular,
) -> Result<(UpperTriangular, StackedFactor)> {
    let n = r1.n();
    if r2.n() != n {
        return Err(Error::dim(
            "qr_uppers",
            format!("r1 is {n}x{n} but r2 is {}x{}", r2.n(), r2.n()),
        ));
    }
    let mut r = r1.clone();
    let mut v = r2.clone();
    let mut tau = vec![0.0; n];
    let mut work = vec![0.0; n];
    let mut vj = vec![0.0; n];

    for j in 0..n {
        // Reflector over [r(j,j); v(0..=j, j)].
        let (t, beta) = {
            let alpha = r.get(j, j);
            let tail = &mut v.col_mut(j)[0..=j];
            let tail_norm = norm2(tail);
            if tail_norm == 0.0 {
                (0.0, alpha)
            } else {
                let nrm = alpha.hypot(tail_norm);
                let beta = if alpha >= 0.0 { -nrm } else { nrm };
                let t = (beta - alpha) / beta;
                let scale = 1.0 / (alpha - beta);
                for x in tail.iter_mut() {
                    *x *= scale;
                }
                flops::add(j as u64 + 6);
                (t, beta)
            }
        };
        tau[j] = t;
        r.set(j, j, beta);

        if j < n - 1 && t != 0.0 {
            // work[c] = v(0..=j, c)^T v(0..=j, j) + r(j, c) over trailing
            // columns, then the rank-1 update confined to rows 0..=j.
            vj[0..=j].copy_from_slice(&v.col(j)[0..=j]);
            for c in j + 1..n {
                let vc = &v.col(c)[0..=j];
                let mut s = r.get(j, c);
                for (a, b) in vj[0..=j].iter().zip(vc) {
                    s += a * b;
                }
                work[c] = s;
            }
            for c in j + 1..n {
                let f = t * work[c];
                let upd = r.get(j, c) - f;
                r.set(j, c, upd);
                let vc = &mut v.col_mut(c)[0..=j];
                for (a, b) in vj[0..=j].iter().zip(vc.iter_mut()) {
                    *b -= f * a;
                }
            }
            flops::add((n - j - 1) as u64 * (4 * (j + 1) as u64 + 3));
        }
    }

    debug_assert!(r.strict_lower_is_zero() && v.strict_lower_is_zero());
    Ok((r, StackedFactor { v, tau }))
}

/// Apply the merge transformation (or its transpose) to a stacked pair of
/// n-by-k blocks, exploiting the triangular reflector sparsity; costs
/// O(n²k) and never materializes the 2n-by-2n matrix.
pub fn apply_stacked_qt(
    sf: &StackedFactor,
    c1: &DenseMatrix,
    c2: &DenseMatrix,
    direction: ApplyDirection,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = sf.n();
    if c1.rows() != n || c2.rows() != n || c1.cols() != c2.cols() {
        return Err(Error::dim(
            "apply_stacked_qt",
            format!(
                "blocks {}x{} and {}x{} against n = {n}",
                c1.rows(),
                c1.cols(),
                c2.rows(),
                c2.cols()
            ),
        ));
    }
    let k = c1.cols();
    let mut top = c1.clone();
    let mut bot = c2.clone();
    let order: Vec<usize> = match direction {
        ApplyDirection::Qt => (0..n).collect(),
        ApplyDirection::Q => (0..n).rev().collect(),
    };
    for &j in &order {
        let t = sf.tau[j];
        if t == 0.0 {
            continue;
        }
        let vj = &sf.v.col(j)[0..=j];
        for col in 0..k {
            let mut s = top.get(j, col);
            {
                let bc = &bot.col(col)[0..=j];
                for (a, b) in vj.iter().zip(bc) {
                    s += a * b;
                }
            }
            let f = t * s;
            let upd = top.get(j, col) - f;
            top.set(j, col, upd);
            let bc = &mut bot.col_mut(col)[0..=j];
            for (a, b) in vj.iter().zip(bc.iter_mut()) {
                *b -= f * a;
            }
        }
        flops::add(k as u64 * (4 * (j + 1) as u64 + 3));
    }
    Ok((top, bot))
}

/// Closed-form flop model for one merge: `round(2n³/3)`.
pub fn kernel_flops_model(n: usize) -> u64 {
    ((2.0 * (n as f64).powi(3)) / 3.0).round() as u64
}
