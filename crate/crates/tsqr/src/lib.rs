//! Tall-and-skinny QR as a reduction over upper-triangular factors.
//!
//! The R factor of the QR factorization of a tall matrix can be computed by
//! factoring row blocks independently and then merging the resulting n-by-n
//! upper-triangular factors pairwise: the merge of two triangles is the R
//! factor of the 2n-by-n matrix obtained by stacking them. That merge is a
//! binary, associative, and (essentially) commutative operation, so any
//! reduction tree over the blocks yields the same R up to the sign of each
//! row. This crate provides:
//!
//! - dense Householder kernels ([`dense`], [`householder`]) used both as
//!   building blocks and as the oracle everything else is verified against,
//! - the structured stacked-triangular merge kernel ([`stacked`]) that costs
//!   about 2n³/3 flops instead of the 10n³/3 of a structure-oblivious code,
//! - a generic reduce/allreduce engine over a simulated process group with
//!   pluggable trees and deterministic replay ([`tree`], [`engine`]),
//! - the end-to-end factorization with Q reconstruction by tree replay
//!   ([`factor`]),
//! - binary file formats and factorization bundles ([`io`]),
//! - flop-count instrumentation ([`flops`]).
//!
//! ```
//! use tsqr::{gen_matrix, GenMode, tree, tsqr_factor, TsqrOptions};
//!
//! let a = gen_matrix(64, 4, 3, GenMode::StandardNormal).unwrap();
//! let t = tree::binary_tree(4).unwrap();
//! let fact = tsqr_factor(&a, &t, &TsqrOptions::default()).unwrap();
//! let (r, _signs) = fact.r.sign_normalize();
//! assert!(r.diag_is_nonnegative());
//! ```
//!
//! A narrative guide lives in `book/`; its code snippets are compiled and run
//! as part of `cargo test` (see the `book_snippets` module).

// Index loops mirror the column-major kernel formulations.
#![allow(clippy::needless_range_loop)]

pub mod dense;
pub mod engine;
pub mod error;
pub mod factor;
pub mod flops;
pub mod householder;
pub mod io;
pub mod stacked;
pub mod tree;
pub mod triangular;

pub use dense::{backward_error, gen_matrix, orthogonality, DenseMatrix, GenMode};
pub use error::{Error, Result};
pub use factor::{
    apply_q, form_q, tsqr_factor, verify_factorization, TsqrFactorization, TsqrOptions,
    VerifyReport,
};
pub use householder::{
    apply_q_panel, form_q_panel, householder_qr, make_householder, ApplyDirection, PanelFactor,
    QrVariant,
};
pub use stacked::{apply_stacked_qt, kernel_flops_model, qr_uppers, StackedFactor};
pub use tree::{CommStats, Merge, ReductionTree};
pub use triangular::UpperTriangular;

// Chapters of the guide are compiled as doctests so the book and the library
// cannot drift apart. See book/src/SUMMARY.md for the reading order.
#[cfg(doctest)]
mod book_snippets {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/reduction-view.md")]
    mod reduction_view {}
    #[doc = include_str!("../../../book/src/householder.md")]
    mod householder {}
    #[doc = include_str!("../../../book/src/stacked-kernel.md")]
    mod stacked_kernel {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/factorization.md")]
    mod factorization {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
