//! Meta-representation learning for linear contextual bandits.
//!
//! A family of bandit tasks shares an unknown low-rank representation: every
//! task parameter lives in the column span of a `d x r` orthonormal matrix.
//! This crate recovers that subspace from logged interactions of past tasks
//! via a trace-norm regularized multi-task least-squares fit, and exploits it
//! on a fresh downstream task with an exploration-free greedy policy.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense SVD-based primitives (singular value thresholding,
//!   rank truncation, orthonormal range, subspace distances).
//! - [`env`]: synthetic environment generators (low-rank task families,
//!   per-round decision sets, noisy linear rewards).
//! - [`mtl`]: the trace-norm multi-task estimator solved by accelerated
//!   proximal gradient with a KKT convergence certificate.
//! - [`representation`]: subspace extraction from the multi-task solution,
//!   rank-agnostic or at a known rank.
//! - [`policies`]: the greedy transfer policy and its oracle/ambient
//!   baselines, plus the uniform behavior policy that records training logs.
//! - [`diagnostics`]: the quantities regret and recovery guarantees are
//!   stated in terms of, computable from simulation runs.
//! - [`experiment`]: config-driven Monte-Carlo harness with CSV output.

pub mod diagnostics;
pub mod env;
mod error;
pub mod experiment;
pub mod linalg;
pub mod mtl;
pub mod policies;
pub mod representation;

pub use error::{Error, Result};
pub use linalg::{Matrix, Representation, SvdFactors};
