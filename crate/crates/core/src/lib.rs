//! Uplift modeling on bipartite user–product graphs under limited supervision.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every algorithmic piece:
//!
//! - [`tensor`]: dense matrices, compressed sparse adjacency, a reverse-mode tape
//!   and an AdamW optimizer.
//! - [`graph`]: bipartite graphs, datasets, the planted-effect synthetic generator
//!   and inverted k-fold plans.
//! - [`model`]: the two-headed GNN uplift model, training and MC-dropout inference.
//! - [`acquisition`]: k-means diversity clusters, acquisition scores, the
//!   constrained batch selector and the active-learning loop.
//! - [`evaluation`]: ATE, up@k, linear S/T baselines and the k-fold experiment runner.
//!
//! File formats, configuration and the command-line driver live in the `umgnet` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod acquisition;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use real::Real;
