//! Training and evaluation engine for tensor-augmented convolutional neural
//! networks (TACNN).
//!
//! A TACNN replaces each convolution kernel with a dense order-N tensor over
//! the 2^N binary configurations of its receptive window. Every pixel of a
//! patch is encoded as a 2-vector `(x, 1-x)`, the patch becomes an implicit
//! product state, and the convolution output is the inner product between
//! that product state and the kernel tensor. The result is multilinear in the
//! patch pixels, so a single layer already captures high-order feature
//! correlations that a plain linear filter cannot.
//!
//! The crate is organized around that pipeline:
//!
//! - [`tensor_core`] — dense order-N kernels and the contraction primitive
//!   with exact gradients
//! - [`encoding`] — pixel encoding, patch extraction, and the inter-layer
//!   normalization/sigmoid mapping
//! - [`layers`] — tensor convolution, baseline convolution, dense/flatten
//!   layers, model assembly, parameter accounting, and checkpoints
//! - [`training`] — cross-entropy, Adam, the epoch loop, and metric tracking
//! - [`data_io`] — Fashion-MNIST IDX parsing, normalization, batching, and
//!   fetching
//! - [`oracle`] — independent brute-force references and finite-difference
//!   checks used by tests and `gradcheck`
//! - [`cli`] — the `fetch | train | eval | bench | gradcheck` command surface
//!
//! See the `examples/` directory for runnable walkthroughs of each
//! capability, and the `tacnn` binary for the command-line interface.

pub mod cli;
pub mod data_io;
pub mod encoding;
pub mod error;
pub mod layers;
pub mod oracle;
pub mod precision;
pub mod rng;
pub mod tensor_core;
pub mod training;

pub use error::{Error, Result};
pub use precision::{Precision, Real};
