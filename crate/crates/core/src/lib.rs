//! Tokenized sparse auto-encoders over a toy decoder-only transformer.
//!
//! The crate provides, bottom up:
//!
//! - [`numerics`]: deterministic matrices, Adam, cosine schedule, seeded PRNG;
//! - [`corpus`]: a Zipf-with-motifs synthetic corpus and exact n-gram tables;
//! - [`lm`]: a small trainable transformer with residual-stream taps, patched
//!   and truncated forward passes, and hand-derived gradients;
//! - [`sae`]: vanilla and top-k sparse auto-encoders with an optional
//!   per-token lookup bias, losses, gradients, and balanced initialization;
//! - [`training`]: the activation buffer pipeline and the SAE training loop;
//! - [`eval`]: reconstruction/sparsity metrics and Pareto sweeps;
//! - [`analysis`]: feature-level diagnostics (unigram scans, dead features,
//!   suffix-n-gram complexity, patching curves, final-token subspaces).
//!
//! Every stochastic operation takes an explicit [`numerics::Rng`]; identical
//! seeds give bit-identical corpora, checkpoints, and reports.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod eval;
mod io;
pub mod lm;
pub mod numerics;
pub mod sae;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
