//! Flop-count instrumentation.
//!
//! Kernels report the multiplies, additions, and divisions they actually
//! execute to a per-thread counter, at inner-loop granularity (one update per
//! vector operation, not per scalar), so the overhead is negligible while
//! totals remain exact. Code that fans work out to worker threads (the
//! reduction engine, the leaf factorizations) adds each worker's count back
//! into the spawning thread when it joins, so a counted section observes all
//! work it caused regardless of thread count.
//!
//! ```
//! use tsqr::flops;
//!
//! let (_out, n) = flops::counted(|| {
//!     tsqr::qr_uppers(
//!         &tsqr::UpperTriangular::identity(8),
//!         &tsqr::UpperTriangular::identity(8),
//!     )
//! });
//! assert!(n > 0);
//! ```

use std::cell::Cell;

thread_local! {
    static COUNTER: Cell<u64> = const { Cell::new(0) };
}

/// Reset this thread's counter to zero.
pub fn reset() {
    COUNTER.with(|c| c.set(0));
}

/// Flops accumulated on this thread since the last [`reset`] (plus any
/// worker counts carried back by the library).
pub fn total() -> u64 {
    COUNTER.with(Cell::get)
}

/// Record `n` executed flops on this thread.
#[inline]
pub(crate) fn add(n: u64) {
    COUNTER.with(|c| c.set(c.get() + n));
}

/// Run `f` and return its result together with the flops it executed.
/// Nestable: measures the delta, not the absolute counter.
pub fn counted<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = total();
    let out = f();
    (out, total() - before)
}
