//! Dense/sparse kernels, the reverse-mode tape and the optimizer.
//!
//! Everything learnable in the model is expressed through these primitives; the
//! tape only knows the handful of operations the architecture needs.

mod matrix;
mod optim;
mod sparse;
mod tape;

pub use matrix::{dropout, matmul, relu, Matrix};
pub use optim::{AdamW, AdamWConfig};
pub use sparse::{Normalization, SparseAdjacency};
pub use tape::{Gradients, Tape, Var};
