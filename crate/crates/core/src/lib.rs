//! Center contrastive loss laboratory: the algorithmic core.
//!
//! Everything in this crate is a deterministic function of its inputs and
//! seeds. It needs `alloc` but not `std`; file IO, configuration and the
//! command-line harness live in the `ccl-lab` crate.
//!
//! Module map:
//!
//! - [`numkernel`]: dense matrices, row normalization, stable log-sum-exp,
//!   central-difference gradients.
//! - [`losses`]: center contrastive loss and the comparison losses, each with
//!   analytic gradients through the embedding (and center) normalization.
//! - [`centerbank`]: the class-center bank with gradient, stop-gradient and
//!   momentum update disciplines.
//! - [`encoder`]: a small MLP embedding network with manual backward pass, plus
//!   SGD-Nesterov and AdamW.
//! - [`data`]: synthetic hypersphere mixtures, IDX parsing, label noise,
//!   batch sampling and query/gallery splits.
//! - [`eval`]: Recall@k and embedding-geometry statistics.
//! - [`gradcheck`]: the finite-difference gradient suite over every loss.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod centerbank;
pub mod data;
pub mod encoder;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod numkernel;
pub(crate) mod rng;

pub use error::{Error, Result};
pub use numkernel::DenseMatrix;
