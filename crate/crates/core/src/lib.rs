//! Controlled cross-modal contrastive alignment on synthetic data with
//! tunable redundancy, together with representation-similarity metrics
//! (linear CKA, SVCCA, mutual k-NN) and a discrete partial information
//! decomposition.

// NaN-rejecting `!(x > 0.0)` checks and index loops over several parallel
// buffers are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod pid;
pub mod simmetrics;
pub mod syndata;
pub mod trainer;

pub use error::{Error, Result};
