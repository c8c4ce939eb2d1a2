//! Dense linear algebra, deterministic RNG, a gradient tape and AdamW.

pub mod adamw;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod tape;
pub mod vexp;

pub use adamw::{AdamWConfig, AdamWState};
pub use linalg::{svd, svd_truncated, Svd};
pub use matrix::Matrix;
pub use rng::Rng;
pub use tape::{Gradients, NodeId, Tape};
