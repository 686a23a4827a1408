//! Generic reduce/allreduce over a simulated process group.
//!
//! The engine executes a [`crate::tree::ReductionTree`] schedule
//! with a user-supplied binary operation. Each merge replaces the
//! destination's value with `op(dst, src)` and records the merge artifact
//! (for the QR reduction, the Householder data needed to replay Q) in a log
//! keyed by `(round, dst, src)`. The destination is always the left operand;
//! the engine never reorders operands even for ops declared commutative.
//!
//! Because the tree fixes both operands of every merge, the result is a pure
//! function of `(locals, op, tree)`: running merges within a round
//! concurrently is bitwise-indistinguishable from the canonical sequential
//! replay. Rounds are barriers; values move between workers by ownership
//! hand-off.

use crate::error::{Error, Result};
use crate::stacked::{qr_uppers, StackedFactor};
use crate::tree::ReductionTree;
use crate::triangular::UpperTriangular;
use std::collections::BTreeMap;

/// Schedule position of a merge: `(round, dst, src)`.
pub type MergeKey = (usize, usize, usize);

/// Artifacts recorded during a reduction, in deterministic key order.
pub type MergeLog<A> = BTreeMap<MergeKey, A>;

/// One extracted merge: index within its round, then both operands.
type MergeJob<O> = (usize, <O as ReduceOp>::Value, <O as ReduceOp>::Value);

/// What `combine` produced for one merge.
type Combined<O> = Result<(<O as ReduceOp>::Value, <O as ReduceOp>::Artifact)>;

/// A binary reduction operation with a per-merge artifact.
pub trait ReduceOp: Sync {
    type Value: Send;
    type Artifact: Send;

    /// Combine, destination first. The engine supplies owned values and
    /// takes ownership of the result.
    fn combine(&self, dst: Self::Value, src: Self::Value) -> Result<(Self::Value, Self::Artifact)>;

    /// Declared commutativity (metadata only, in the spirit of MPI's
    /// user-defined-operation flag; the engine still never swaps operands).
    fn is_commutative(&self) -> bool {
        true
    }
}

/// The QR merge: combine two R factors into the R of their stack, keeping
/// the Householder data as the artifact.
#[derive(Debug, Clone, Copy, Default)]
pub struct QrUppersOp;

impl ReduceOp for QrUppersOp {
    type Value = UpperTriangular;
    type Artifact = StackedFactor;

    fn combine(
        &self,
        dst: UpperTriangular,
        src: UpperTriangular,
    ) -> Result<(UpperTriangular, StackedFactor)> {
        qr_uppers(&dst, &src)
    }
}

/// Exact integer addition; handy for schedule sanity checks because any
/// valid tree gives the identical sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct SumOp;

impl ReduceOp for SumOp {
    type Value = i64;
    type Artifact = ();

    fn combine(&self, dst: i64, src: i64) -> Result<(i64, ())> {
        Ok((dst + src, ()))
    }
}

/// Canonical single-threaded reduce: returns the root's final value and the
/// merge log.
pub fn reduce<O: ReduceOp>(
    locals: Vec<O::Value>,
    op: &O,
    tree: &ReductionTree,
) -> Result<(O::Value, MergeLog<O::Artifact>)> {
    reduce_threaded(locals, op, tree, 1)
}

/// Reduce with up to `threads` workers per round. Results are bitwise
/// identical for every thread count.
pub fn reduce_threaded<O: ReduceOp>(
    locals: Vec<O::Value>,
    op: &O,
    tree: &ReductionTree,
    threads: usize,
) -> Result<(O::Value, MergeLog<O::Artifact>)> {
    tree.validate()?;
    if locals.len() != tree.p() {
        return Err(Error::dim(
            "reduce",
            format!("{} local values for p = {}", locals.len(), tree.p()),
        ));
    }
    let threads = threads.max(1);
    let mut slots: Vec<Option<O::Value>> = locals.into_iter().map(Some).collect();
    let mut log: MergeLog<O::Artifact> = BTreeMap::new();

    for (round_idx, round) in tree.rounds().iter().enumerate() {
        // Pull both operands of every merge out of the slots up front; the
        // within-round independence invariant guarantees no overlap.
        let mut jobs: Vec<MergeJob<O>> = Vec::with_capacity(round.len());
        for (merge_idx, m) in round.iter().enumerate() {
            let dst = slots[m.dst].take().expect("dst alive by tree invariant");
            let src = slots[m.src].take().expect("src alive by tree invariant");
            jobs.push((merge_idx, dst, src));
        }

        let results = run_round(op, jobs, threads);

        for (merge_idx, outcome) in results {
            let m = round[merge_idx];
            let (value, artifact) = outcome.map_err(|e| Error::MergeFailed {
                round: round_idx,
                dst: m.dst,
                src: m.src,
                source: Box::new(e),
            })?;
            slots[m.dst] = Some(value);
            log.insert((round_idx, m.dst, m.src), artifact);
        }
    }

    let root_value = slots[tree.root()]
        .take()
        .expect("root alive by tree invariant");
    Ok((root_value, log))
}

/// Execute one round's merges, possibly concurrently, returning outcomes
/// sorted by merge index so failures surface in canonical order.
fn run_round<O: ReduceOp>(
    op: &O,
    jobs: Vec<MergeJob<O>>,
    threads: usize,
) -> Vec<(usize, Combined<O>)> {
    let mut results: Vec<(usize, Combined<O>)> = if threads == 1 || jobs.len() <= 1 {
        jobs.into_iter()
            .map(|(idx, dst, src)| (idx, op.combine(dst, src)))
            .collect()
    } else {
        let workers = threads.min(jobs.len());
        let mut buckets: Vec<Vec<MergeJob<O>>> = (0..workers).map(|_| Vec::new()).collect();
        for (i, job) in jobs.into_iter().enumerate() {
            buckets[i % workers].push(job);
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = buckets
                .into_iter()
                .map(|bucket| {
                    scope.spawn(move || {
                        let out = bucket
                            .into_iter()
                            .map(|(idx, dst, src)| (idx, op.combine(dst, src)))
                            .collect::<Vec<_>>();
                        (out, crate::flops::total())
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| {
                    let (out, worker_flops) = h.join().expect("merge worker panicked");
                    crate::flops::add(worker_flops);
                    out
                })
                .collect()
        })
    };
    results.sort_by_key(|(idx, _)| *idx);
    results
}

/// Reduce, then broadcast the root value so every rank holds a bitwise copy.
#[allow(clippy::type_complexity)]
pub fn allreduce<O: ReduceOp>(
    locals: Vec<O::Value>,
    op: &O,
    tree: &ReductionTree,
) -> Result<(Vec<O::Value>, MergeLog<O::Artifact>)>
where
    O::Value: Clone,
{
    let p = tree.p();
    let (root_value, log) = reduce(locals, op, tree)?;
    // Broadcast down the reversed tree; with a simulated group this is p-1
    // bitwise copies (the path only matters for message accounting).
    let out = vec![root_value; p];
    Ok((out, log))
}
