//! End-to-end tall-skinny QR over a simulated process group.
//!
//! Each rank factors its contiguous row block locally, the n-by-n R factors
//! are reduced through a tree with the stacked-triangular kernel, and every
//! Householder vector generated along the way is kept: the leaf panel
//! factors plus the per-merge stacked factors, keyed by schedule position,
//! are exactly what is needed to apply or form the thin Q afterwards by
//! replaying the tree.

use crate::dense::{backward_error, orthogonality, DenseMatrix};
use crate::engine::{reduce_threaded, MergeLog, QrUppersOp};
use crate::error::{Error, Result};
use crate::householder::{apply_q_panel, householder_qr, ApplyDirection, PanelFactor, QrVariant};
use crate::stacked::{apply_stacked_qt, StackedFactor};
use crate::tree::{comm_stats, CommStats, ReductionTree};
use crate::triangular::UpperTriangular;

/// Knobs for [`tsqr_factor`].
#[derive(Debug, Clone, Copy)]
pub struct TsqrOptions {
    pub variant: QrVariant,
    /// Worker threads for leaf factorizations and within-round merges.
    /// Results are bitwise identical for every value.
    pub threads: usize,
}

impl Default for TsqrOptions {
    fn default() -> Self {
        Self {
            variant: QrVariant::Unblocked,
            threads: 1,
        }
    }
}

/// Everything produced by one TSQR run; sufficient to reproduce R bitwise
/// and to apply or form the thin Q.
#[derive(Debug, Clone, PartialEq)]
pub struct TsqrFactorization {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub variant: QrVariant,
    pub tree: ReductionTree,
    /// Contiguous `(start_row, rows)` per rank, in rank order.
    pub row_partition: Vec<(usize, usize)>,
    /// Local panel factorization per rank.
    pub leaf_factors: Vec<PanelFactor>,
    /// Householder data of every merge, keyed by `(round, dst, src)`.
    pub merge_factors: MergeLog<StackedFactor>,
    /// Root R factor, raw kernel sign convention.
    pub r: UpperTriangular,
}

/// Split `m` rows into `p` contiguous blocks, as even as possible, earlier
/// ranks taking the extra rows.
pub fn partition_rows(m: usize, p: usize) -> Vec<(usize, usize)> {
    assert!(p >= 1);
    let base = m / p;
    let extra = m % p;
    let mut start = 0;
    (0..p)
        .map(|rank| {
            let rows = base + usize::from(rank < extra);
            let out = (start, rows);
            start += rows;
            out
        })
        .collect()
}

fn leaf_panels(
    a: &DenseMatrix,
    partition: &[(usize, usize)],
    variant: QrVariant,
    threads: usize,
) -> Result<Vec<PanelFactor>> {
    let blocks: Vec<DenseMatrix> = partition
        .iter()
        .map(|&(start, rows)| a.row_block(start, rows))
        .collect();
    if threads <= 1 || blocks.len() == 1 {
        return blocks.iter().map(|b| householder_qr(b, variant)).collect();
    }
    let workers = threads.min(blocks.len());
    let mut buckets: Vec<Vec<(usize, DenseMatrix)>> = (0..workers).map(|_| Vec::new()).collect();
    for (rank, block) in blocks.into_iter().enumerate() {
        buckets[rank % workers].push((rank, block));
    }
    let mut results: Vec<(usize, Result<PanelFactor>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = buckets
            .into_iter()
            .map(|bucket| {
                scope.spawn(move || {
                    let out = bucket
                        .into_iter()
                        .map(|(rank, block)| (rank, householder_qr(&block, variant)))
                        .collect::<Vec<_>>();
                    (out, crate::flops::total())
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| {
                let (out, worker_flops) = h.join().expect("leaf worker panicked");
                crate::flops::add(worker_flops);
                out
            })
            .collect()
    });
    results.sort_by_key(|(rank, _)| *rank);
    results.into_iter().map(|(_, pf)| pf).collect()
}

/// Factor `a` over the process group described by `tree`.
///
/// Every rank must receive at least n rows (`a.rows() >= tree.p() * a.cols()`
/// guarantees it); otherwise the offending rank is named in the error.
pub fn tsqr_factor(
    a: &DenseMatrix,
    tree: &ReductionTree,
    opts: &TsqrOptions,
) -> Result<TsqrFactorization> {
    tree.validate()?;
    let (m, n, p) = (a.rows(), a.cols(), tree.p());
    let partition = partition_rows(m, p);
    for (rank, &(_, rows)) in partition.iter().enumerate() {
        if rows < n {
            return Err(Error::Partition { rank, rows, min: n });
        }
    }
    let leaf_factors = leaf_panels(a, &partition, opts.variant, opts.threads)?;
    let locals: Vec<UpperTriangular> = leaf_factors.iter().map(|pf| pf.r.clone()).collect();
    let (r, merge_factors) = reduce_threaded(locals, &QrUppersOp, tree, opts.threads)?;
    Ok(TsqrFactorization {
        m,
        n,
        p,
        variant: opts.variant,
        tree: tree.clone(),
        row_partition: partition,
        leaf_factors,
        merge_factors,
        r,
    })
}

impl TsqrFactorization {
    fn merge_factor(&self, round: usize, dst: usize, src: usize) -> Result<&StackedFactor> {
        self.merge_factors.get(&(round, dst, src)).ok_or_else(|| {
            Error::IncompleteFactorization(format!(
                "missing merge factor for round {round}, {dst}<-{src}"
            ))
        })
    }
}

/// Apply the thin Q of a factorization by tree replay.
///
/// - [`ApplyDirection::Qt`]: `c` is m-by-k; returns the n-by-k product
///   `Q^T c` (leaf `Q^T` per block, then merge `Q^T` round by round; the
///   root's carrier is the answer).
/// - [`ApplyDirection::Q`]: `c` is n-by-k; returns the m-by-k product `Q c`
///   (reverse replay from the root, then leaf `Q` per block).
pub fn apply_q(
    fact: &TsqrFactorization,
    c: &DenseMatrix,
    direction: ApplyDirection,
) -> Result<DenseMatrix> {
    let (m, n, k) = (fact.m, fact.n, c.cols());
    match direction {
        ApplyDirection::Qt => {
            if c.rows() != m {
                return Err(Error::dim(
                    "apply_q",
                    format!("Q^T c needs c with {m} rows, got {}", c.rows()),
                ));
            }
            let mut carriers: Vec<DenseMatrix> = Vec::with_capacity(fact.p);
            for (rank, &(start, rows)) in fact.row_partition.iter().enumerate() {
                let block = c.row_block(start, rows);
                let transformed = apply_q_panel(&fact.leaf_factors[rank], &block, direction)?;
                carriers.push(transformed.row_block(0, n));
            }
            for (round_idx, round) in fact.tree.rounds().iter().enumerate() {
                for mrg in round {
                    let sf = fact.merge_factor(round_idx, mrg.dst, mrg.src)?;
                    let (top, bot) =
                        apply_stacked_qt(sf, &carriers[mrg.dst], &carriers[mrg.src], direction)?;
                    carriers[mrg.dst] = top;
                    carriers[mrg.src] = bot;
                }
            }
            Ok(carriers.swap_remove(fact.tree.root()))
        }
        ApplyDirection::Q => {
            if c.rows() != n {
                return Err(Error::dim(
                    "apply_q",
                    format!("Q c needs c with {n} rows, got {}", c.rows()),
                ));
            }
            // Thin Q c = full Q applied to c padded with zeros, so every
            // carrier except the root starts at zero.
            let mut carriers: Vec<DenseMatrix> =
                (0..fact.p).map(|_| DenseMatrix::zeros(n, k)).collect();
            carriers[fact.tree.root()] = c.clone();
            for (round_idx, round) in fact.tree.rounds().iter().enumerate().rev() {
                for mrg in round.iter().rev() {
                    let sf = fact.merge_factor(round_idx, mrg.dst, mrg.src)?;
                    let (top, bot) =
                        apply_stacked_qt(sf, &carriers[mrg.dst], &carriers[mrg.src], direction)?;
                    carriers[mrg.dst] = top;
                    carriers[mrg.src] = bot;
                }
            }
            let mut out = DenseMatrix::zeros(m, k);
            for (rank, &(start, rows)) in fact.row_partition.iter().enumerate() {
                let mut padded = DenseMatrix::zeros(rows, k);
                padded.set_row_block(0, &carriers[rank]);
                let block = apply_q_panel(&fact.leaf_factors[rank], &padded, direction)?;
                out.set_row_block(start, &block);
            }
            Ok(out)
        }
    }
}

/// Form the thin m-by-n Q explicitly by applying Q to the identity.
pub fn form_q(fact: &TsqrFactorization) -> Result<DenseMatrix> {
    apply_q(fact, &DenseMatrix::identity(fact.n), ApplyDirection::Q)
}

/// Health report for a factorization of `a`; see [`verify_factorization`].
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// `||a - Q r||_F / ||a||_F` with Q formed by tree replay.
    pub backward_error: f64,
    /// `||Q^T Q - I||_F`.
    pub orthogonality: f64,
    /// Largest elementwise difference between the sign-normalized R and the
    /// sign-normalized R of a single-panel reference factorization.
    pub r_vs_reference: f64,
    pub tree_stats: CommStats,
    pub backward_error_ok: bool,
    pub orthogonality_ok: bool,
    pub r_vs_reference_ok: bool,
}

impl VerifyReport {
    pub fn all_ok(&self) -> bool {
        self.backward_error_ok && self.orthogonality_ok && self.r_vs_reference_ok
    }
}

/// Recompute all health metrics for `fact`, which must have been produced
/// from `a`. Flags any metric exceeding its threshold instead of failing.
pub fn verify_factorization(a: &DenseMatrix, fact: &TsqrFactorization) -> Result<VerifyReport> {
    let n = fact.n as f64;
    let eps = f64::EPSILON;
    let q = form_q(fact)?;
    let be = backward_error(a, &q, &fact.r)?;
    let orth = orthogonality(&q);
    let reference = householder_qr(a, fact.variant)?;
    let (lhs, _) = fact.r.sign_normalize();
    let (rhs, _) = reference.r.sign_normalize();
    let r_vs_reference = lhs.max_abs_diff(&rhs);
    let metric_tol = 100.0 * n * eps;
    let elementwise_tol = 100.0 * n * eps * a.frobenius_norm();
    Ok(VerifyReport {
        backward_error: be,
        orthogonality: orth,
        r_vs_reference,
        tree_stats: comm_stats(&fact.tree, fact.n, false),
        backward_error_ok: be <= metric_tol,
        orthogonality_ok: orth <= metric_tol,
        r_vs_reference_ok: r_vs_reference <= elementwise_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{gen_matrix, GenMode};
    use crate::tree::{binary_tree, flat_tree};

    const EPS: f64 = f64::EPSILON;

    #[test]
    fn partition_is_even_with_early_extras() {
        assert_eq!(partition_rows(10, 3), vec![(0, 4), (4, 3), (7, 3)]);
        assert_eq!(
            partition_rows(6, 6),
            vec![(0, 1), (1, 1), (2, 1), (3, 1), (4, 1), (5, 1)]
        );
        assert_eq!(partition_rows(5, 1), vec![(0, 5)]);
    }

    #[test]
    fn single_rank_matches_panel_code_bitwise() {
        let a = gen_matrix(20, 5, 17, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(1).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let reference = householder_qr(&a, QrVariant::Unblocked).unwrap();
        assert_eq!(fact.r, reference.r);
        assert!(fact.merge_factors.is_empty());

        let c = gen_matrix(5, 2, 3, GenMode::StandardNormal).unwrap();
        let via_tree = apply_q(&fact, &c, ApplyDirection::Q).unwrap();
        let mut padded = DenseMatrix::zeros(20, 2);
        padded.set_row_block(0, &c);
        let via_panel = apply_q_panel(&reference, &padded, ApplyDirection::Q).unwrap();
        assert_eq!(via_tree, via_panel);

        let q_tree = form_q(&fact).unwrap();
        let q_panel = crate::householder::form_q_panel(&reference);
        assert_eq!(q_tree, q_panel);
    }

    #[test]
    fn matches_reference_up_to_row_signs() {
        let a = gen_matrix(64, 4, 3, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let reference = householder_qr(&a, QrVariant::Unblocked).unwrap();
        let (x, _) = fact.r.sign_normalize();
        let (y, _) = reference.r.sign_normalize();
        let tol = 100.0 * 4.0 * EPS * a.frobenius_norm();
        assert!(x.max_abs_diff(&y) <= tol);
    }

    #[test]
    fn trees_agree_up_to_row_signs() {
        let a = gen_matrix(64, 4, 3, GenMode::StandardNormal).unwrap();
        let opts = TsqrOptions::default();
        let fb = tsqr_factor(&a, &binary_tree(4).unwrap(), &opts).unwrap();
        let ff = tsqr_factor(&a, &flat_tree(4).unwrap(), &opts).unwrap();
        let (x, _) = fb.r.sign_normalize();
        let (y, _) = ff.r.sign_normalize();
        let tol = 200.0 * 4.0 * EPS * a.frobenius_norm();
        assert!(x.max_abs_diff(&y) <= tol);
    }

    #[test]
    fn rejects_short_blocks_naming_rank() {
        let a = gen_matrix(64, 32, 1, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        match tsqr_factor(&a, &tree, &TsqrOptions::default()) {
            Err(Error::Partition { rank, rows, min }) => {
                assert_eq!((rank, rows, min), (0, 16, 32));
            }
            other => panic!("expected partition error, got {other:?}"),
        }
    }

    #[test]
    fn qt_of_input_reveals_r() {
        let a = gen_matrix(96, 6, 5, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let qt_a = apply_q(&fact, &a, ApplyDirection::Qt).unwrap();
        let tol = 100.0 * 6.0 * EPS * a.frobenius_norm();
        assert!(qt_a.max_abs_diff(&fact.r.to_dense()) <= tol);
    }

    #[test]
    fn projector_identity_on_column_space() {
        let a = gen_matrix(96, 6, 5, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        // c = a x lies in range(a), so Q Q^T c recovers c.
        let x = gen_matrix(6, 2, 77, GenMode::StandardNormal).unwrap();
        let c = a.matmul(&x).unwrap();
        let qt_c = apply_q(&fact, &c, ApplyDirection::Qt).unwrap();
        let back = apply_q(&fact, &qt_c, ApplyDirection::Q).unwrap();
        let tol = 100.0 * 6.0 * EPS * c.frobenius_norm();
        assert!(back.max_abs_diff(&c) <= tol);
    }

    #[test]
    fn formed_q_is_orthogonal_with_small_residual() {
        let a = gen_matrix(96, 6, 5, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let q = form_q(&fact).unwrap();
        assert!(orthogonality(&q) <= 100.0 * 6.0 * EPS);
        assert!(backward_error(&a, &q, &fact.r).unwrap() <= 100.0 * 6.0 * EPS);
    }

    #[test]
    fn replay_reproduces_root_bitwise() {
        use crate::engine::{reduce, QrUppersOp};
        let a = gen_matrix(80, 5, 9, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(8).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let locals: Vec<UpperTriangular> =
            fact.leaf_factors.iter().map(|pf| pf.r.clone()).collect();
        let (r, log) = reduce(locals, &QrUppersOp, &tree).unwrap();
        assert_eq!(r, fact.r);
        assert_eq!(log, fact.merge_factors);
    }

    #[test]
    fn factor_is_deterministic_across_thread_counts() {
        let a = gen_matrix(128, 8, 13, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(8).unwrap();
        let base = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        for threads in [2usize, 4] {
            let opts = TsqrOptions {
                threads,
                ..Default::default()
            };
            let fact = tsqr_factor(&a, &tree, &opts).unwrap();
            assert_eq!(fact, base);
        }
    }

    #[test]
    fn verify_flags_clear_on_healthy_run() {
        let a = gen_matrix(96, 6, 5, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let report = verify_factorization(&a, &fact).unwrap();
        assert!(report.all_ok(), "report: {report:?}");
        assert_eq!(report.tree_stats.messages, 3);
    }

    #[test]
    fn verify_flags_raised_on_corruption() {
        let a = gen_matrix(96, 6, 5, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let mut fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let key = *fact.merge_factors.keys().next().unwrap();
        fact.merge_factors.get_mut(&key).unwrap().tau = vec![0.0; 6];
        let report = verify_factorization(&a, &fact).unwrap();
        assert!(
            !report.backward_error_ok,
            "corruption went undetected: {report:?}"
        );
    }

    #[test]
    fn verify_reference_is_exact_for_single_rank() {
        let a = gen_matrix(40, 4, 23, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(1).unwrap();
        let fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let report = verify_factorization(&a, &fact).unwrap();
        assert_eq!(report.r_vs_reference, 0.0);
    }

    #[test]
    fn missing_merge_factor_is_reported() {
        let a = gen_matrix(64, 4, 3, GenMode::StandardNormal).unwrap();
        let tree = binary_tree(4).unwrap();
        let mut fact = tsqr_factor(&a, &tree, &TsqrOptions::default()).unwrap();
        let key = *fact.merge_factors.keys().next().unwrap();
        fact.merge_factors.remove(&key);
        match form_q(&fact) {
            Err(Error::IncompleteFactorization(_)) => {}
            other => panic!("expected incomplete-factorization error, got {other:?}"),
        }
    }
}
