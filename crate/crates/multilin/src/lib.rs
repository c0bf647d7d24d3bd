//! Dense multilinear algebra with trainable low-rank tensor layers.
//!
//! The crate is organized around a row-major [`tensor::DenseTensor`] value
//! type and builds up from there:
//!
//! - [`tensor`]: unfolding/folding, vectorization, n-mode products,
//!   Kronecker products, generalized inner products.
//! - [`dtf`]: the `DTF1` binary tensor file format.
//! - [`tucker`]: Tucker decomposition (HOSVD initialization, HOOI
//!   refinement, partial decompositions) and reconstruction.
//! - [`layers`]: tensor contraction and low-rank tensor regression layers
//!   plus a fully-connected baseline, each with analytic gradients, exact
//!   parameter counts, and directory serialization.
//! - [`train`]: synthetic regression data, batch normalization, mini-batch
//!   SGD over layer stacks, and RMSE evaluation.
//! - [`gradcheck`]: central finite-difference verification of every
//!   analytic gradient.
//! - [`analysis`]: symbolic parameter counting and space-savings tables for
//!   network tail architectures.

pub mod analysis;
pub mod dtf;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod tensor;
pub mod train;
pub mod tucker;

mod svd;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, Matrix};
