//! Prototype + boosted-tree hard-vote classification toolkit.
//!
//! The crate has three layers:
//!
//! * a data layer ([`data`], [`linalg`]) that loads expression-style count
//!   tables, normalizes them, and reduces them with leakage-safe PCA;
//! * three classifiers — a bounded-embedding prototype model
//!   ([`prototype`]), and depth-wise / leaf-wise regularized gradient-boosted
//!   trees ([`gbdt`]) — combined by hard majority vote ([`ensemble`]) and
//!   scored by [`metrics`];
//! * a verification lab ([`theory`]) that checks the concentration, margin,
//!   vote-decomposition, and prior-robustness guarantees those classifiers
//!   rely on against brute-force and Monte-Carlo oracles.
//!
//! Everything is deterministic given a master seed; see [`rng`].

pub mod data;
pub mod ensemble;
pub mod error;
pub mod gbdt;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod prototype;
pub mod rng;
mod serde_mat;
pub mod theory;

pub use error::{Error, Result};
