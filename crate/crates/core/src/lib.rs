//! Sparse representation based open set recognition.
//!
//! A test vector is coded over a dictionary of training samples by
//! l1-minimisation, and the per-class reconstruction residuals drive both the
//! closed-set decision (smallest residual wins) and the open-set decision:
//! Generalized Pareto models fitted to the tails of matched residuals and of
//! sums of non-matched residuals turn a test sample's residuals into
//! probabilities, which are fused and compared with a rejection threshold.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! harness and the command line tool live in the companion `srosr` crate.
//!
//! Module map:
//! * [`dataset`]: labelled feature matrices, normalisation, open-set trial sampling
//! * [`sparse`]: dictionaries, the l1 solvers, class residuals, SCI and ratio scores
//! * [`evt`]: peaks-over-threshold Generalized Pareto fitting and tail probabilities
//! * [`srosr`]: error harvesting, tail model training and fused classification
//! * [`baselines`]: SCI, ratio and naive residual-threshold rejectors
//! * [`metrics`]: open-set confusion counts, F-measure and accuracy
#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod dataset;
mod error;
pub mod evt;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sparse;
pub mod srosr;

pub use crate::dataset::{ClassId, LabeledDataset, OpenSetTrial};
pub use crate::error::{Error, ErrorKind, Result};
pub use crate::metrics::Label;
