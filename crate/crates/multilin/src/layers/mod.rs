//! Trainable layers: the tensor contraction layer, the low-rank tensor
//! regression layer, and a fully-connected baseline.
//!
//! Each layer has a forward evaluation, an analytic backward pass returning
//! gradients for every parameter plus the input (for chaining), and an
//! exact integer parameter count. Layers are plain data; the training
//! harness owns update scheduling, so there is no interior mutability.

mod fc;
mod store;
mod tcl;
mod trl;

pub use fc::{fc_backward, fc_forward, FcGradients, FcLayer};
pub use store::{load_fc, load_tcl, load_trl, save_fc, save_tcl, save_trl};
pub use tcl::{tcl_backward, tcl_forward, tcl_param_count, TclGradients, TclLayer};
pub use trl::{
    fc_param_count, init_trl_from_linear, normalize_trl_factors, trl_backward, trl_forward,
    trl_forward_materialized, trl_param_count, TrlGradients, TrlLayer,
};

use crate::tensor::Matrix;
use rand::Rng;

/// Uniform init in `[-s, s]` with `s = 1/sqrt(fan_in)`, keeping forward
/// activations O(1) at initialization.
pub(crate) fn uniform_fanin<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::uniform(rows, cols, -s, s, rng)
}
