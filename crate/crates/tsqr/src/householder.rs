//! Householder reflector generation and panel QR.
//!
//! A reflector `H = I - tau v v^T` with `v[0] = 1` maps a vector onto a
//! multiple of the first coordinate axis. Chaining one reflector per column
//! factors a tall panel; the reflectors are kept (not accumulated into a
//! dense Q) so Q can later be applied or formed on demand. Everything here is
//! scalar reference code: it doubles as the oracle that the structured
//! kernels and the tree factorization are checked against.

use crate::dense::{norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::flops;
use crate::triangular::UpperTriangular;

/// Column threshold below which the recursive variant stops splitting.
pub const DEFAULT_RECURSION_THRESHOLD: usize = 8;

/// Which panel-QR elimination order to use.
///
/// Both variants produce the same reflectors; the recursive variant only
/// reorders the column updates (each column still receives its reflectors in
/// ascending order), so the factors agree to roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QrVariant {
    /// Classic one-column-at-a-time elimination.
    #[default]
    Unblocked,
    /// Split the columns in half, factor left, update right, recurse.
    Recursive { threshold: usize },
}

impl QrVariant {
    pub fn recursive_default() -> Self {
        QrVariant::Recursive {
            threshold: DEFAULT_RECURSION_THRESHOLD,
        }
    }
}

/// Apply a reflector as `Q c` or `Q^T c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyDirection {
    Q,
    Qt,
}

/// Compact panel factorization: `a = Q r` with Q held as reflectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelFactor {
    /// Householder vectors, unit lower-trapezoidal: column j holds the tail
    /// of reflector j strictly below the diagonal, the diagonal 1 is
    /// implicit, everything on and above is zero.
    pub v: DenseMatrix,
    /// Reflector scalars, one per column; each is 0 or lies in [1, 2].
    pub tau: Vec<f64>,
    /// The panel's R factor (raw sign convention).
    pub r: UpperTriangular,
}

/// Build the reflector annihilating all but the first entry of `x`.
///
/// Returns `(v, tau, beta)` with `v[0] = 1` such that
/// `(I - tau v v^T) x = (beta, 0, ..., 0)` and `|beta| = ||x||_2`. The sign
/// convention is `beta = -sign(x[0]) ||x||_2` with `sign(0) = +1`. When the
/// tail of `x` is already zero the reflector degenerates: `tau = 0`,
/// `beta = x[0]`.
pub fn make_householder(x: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if x.is_empty() {
        return Err(Error::dim("make_householder", "empty vector"));
    }
    let mut v = x.to_vec();
    let (tau, beta) = reflect_in_place(&mut v);
    v[0] = 1.0;
    Ok((v, tau, beta))
}

/// In-place reflector generation on a column slice: on return `col[0]` is
/// overwritten with beta and `col[1..]` with the reflector tail.
pub(crate) fn reflect_in_place(col: &mut [f64]) -> (f64, f64) {
    let alpha = col[0];
    let tail_norm = norm2(&col[1..]);
    if tail_norm == 0.0 {
        return (0.0, alpha);
    }
    let norm = alpha.hypot(tail_norm);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for t in &mut col[1..] {
        *t *= scale;
    }
    flops::add(col.len() as u64 + 4);
    col[0] = beta;
    (tau, beta)
}

/// `y[0] -= f; y[1..] -= f * v` fused with the preceding dot product: apply
/// one reflector (tail `v`, scalar `tau`) to the column slice `y` starting at
/// the pivot row.
#[inline]
fn reflect_column(v_tail: &[f64], tau: f64, y: &mut [f64]) {
    let (head, rest) = y.split_first_mut().expect("pivot row present");
    let mut s = *head;
    for (vi, xi) in v_tail.iter().zip(rest.iter()) {
        s += vi * xi;
    }
    let f = tau * s;
    *head -= f;
    for (vi, xi) in v_tail.iter().zip(rest.iter_mut()) {
        *xi -= f * vi;
    }
}

/// Apply reflector j (stored in `w`, tail strictly below the diagonal of
/// column j) to columns `[c0, c1)` of `w`.
fn apply_reflector_within(w: &mut DenseMatrix, tau: &[f64], j: usize, c0: usize, c1: usize) {
    if tau[j] == 0.0 || c0 >= c1 {
        return;
    }
    let m = w.rows();
    let v_tail = w.col(j)[j + 1..m].to_vec();
    for c in c0..c1 {
        reflect_column(&v_tail, tau[j], &mut w.col_mut(c)[j..m]);
    }
    flops::add((c1 - c0) as u64 * (4 * (m - j - 1) as u64 + 3));
}

fn factor_columns(w: &mut DenseMatrix, tau: &mut [f64], j0: usize, j1: usize, threshold: usize) {
    let m = w.rows();
    if j1 - j0 <= threshold.max(1) {
        for j in j0..j1 {
            let col = &mut w.col_mut(j)[j..m];
            let (t, _beta) = reflect_in_place(col);
            tau[j] = t;
            apply_reflector_within(w, tau, j, j + 1, j1);
        }
        return;
    }
    let mid = j0 + (j1 - j0) / 2;
    factor_columns(w, tau, j0, mid, threshold);
    for j in j0..mid {
        apply_reflector_within(w, tau, j, mid, j1);
    }
    factor_columns(w, tau, mid, j1, threshold);
}

/// Householder QR of a tall panel (`rows >= cols`).
pub fn householder_qr(a: &DenseMatrix, variant: QrVariant) -> Result<PanelFactor> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::dim(
            "householder_qr",
            format!("panel is {m}x{n}; need rows >= cols"),
        ));
    }
    let mut w = a.clone();
    let mut tau = vec![0.0; n];
    let threshold = match variant {
        QrVariant::Unblocked => n,
        QrVariant::Recursive { threshold } => threshold,
    };
    factor_columns(&mut w, &mut tau, 0, n, threshold);

    let r = UpperTriangular::from_dense_upper(&w)?;
    let mut v = DenseMatrix::zeros(m, n);
    for j in 0..n {
        for i in j + 1..m {
            v.set(i, j, w.get(i, j));
        }
    }
    Ok(PanelFactor { v, tau, r })
}

/// Apply the panel's Q or Q^T to a conforming matrix without forming Q.
pub fn apply_q_panel(
    pf: &PanelFactor,
    c: &DenseMatrix,
    direction: ApplyDirection,
) -> Result<DenseMatrix> {
    let m = pf.v.rows();
    let n = pf.v.cols();
    if c.rows() != m {
        return Err(Error::dim(
            "apply_q_panel",
            format!("c has {} rows, panel has {m}", c.rows()),
        ));
    }
    let mut out = c.clone();
    let k = out.cols();
    let order: Vec<usize> = match direction {
        ApplyDirection::Qt => (0..n).collect(),
        ApplyDirection::Q => (0..n).rev().collect(),
    };
    for &j in &order {
        if pf.tau[j] == 0.0 {
            continue;
        }
        let v_tail = &pf.v.col(j)[j + 1..m];
        for col in 0..k {
            reflect_column(v_tail, pf.tau[j], &mut out.col_mut(col)[j..m]);
        }
        flops::add(k as u64 * (4 * (m - j - 1) as u64 + 3));
    }
    Ok(out)
}

/// Form the thin Q (rows-by-cols) by applying Q to `[I; 0]`.
pub fn form_q_panel(pf: &PanelFactor) -> DenseMatrix {
    let m = pf.v.rows();
    let n = pf.v.cols();
    let mut eye = DenseMatrix::zeros(m, n);
    for i in 0..n {
        eye.set(i, i, 1.0);
    }
    apply_q_panel(pf, &eye, ApplyDirection::Q).expect("conforming by construction")
}
