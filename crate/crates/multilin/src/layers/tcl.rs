//! Tensor contraction layer: contracts every non-batch mode of the input by
//! a learned factor, producing a smaller core while preserving order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{n_mode_product, unfold, DenseTensor, Matrix};

use super::uniform_fanin;

/// Contraction factors `V^(k)` of shape `(R_k, D_k)`, one per non-batch
/// input mode. The layer is bias-free; its parameter count is
/// `sum_k D_k * R_k`.
#[derive(Debug, Clone)]
pub struct TclLayer {
    factors: Vec<Matrix>,
    input_dims: Vec<usize>,
    output_ranks: Vec<usize>,
}

impl TclLayer {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "contraction layer needs at least one factor".into(),
            ));
        }
        let input_dims = factors.iter().map(Matrix::cols).collect();
        let output_ranks = factors.iter().map(Matrix::rows).collect();
        Ok(Self {
            factors,
            input_dims,
            output_ranks,
        })
    }

    /// Random layer with factors drawn uniform in `[-1/sqrt(D_k), 1/sqrt(D_k)]`.
    pub fn random<R: Rng>(input_dims: &[usize], output_ranks: &[usize], rng: &mut R) -> Result<Self> {
        if input_dims.len() != output_ranks.len() {
            return Err(Error::InvalidArgument(format!(
                "{} input dims but {} output ranks",
                input_dims.len(),
                output_ranks.len()
            )));
        }
        let factors = input_dims
            .iter()
            .zip(output_ranks)
            .map(|(&d, &r)| uniform_fanin(r, d, d, rng))
            .collect();
        Self::new(factors)
    }

    /// Identity contraction on every mode (useful as a reference point).
    pub fn identity(dims: &[usize]) -> Result<Self> {
        Self::new(dims.iter().map(|&d| Matrix::identity(d)).collect())
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [Matrix] {
        &mut self.factors
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_ranks(&self) -> &[usize] {
        &self.output_ranks
    }

    pub fn param_count(&self) -> u64 {
        tcl_param_count(&self.input_dims, &self.output_ranks)
    }
}

/// `sum_k D_k * R_k`.
pub fn tcl_param_count(input_dims: &[usize], output_ranks: &[usize]) -> u64 {
    input_dims
        .iter()
        .zip(output_ranks)
        .map(|(&d, &r)| d as u64 * r as u64)
        .sum()
}

fn check_input(layer: &TclLayer, x: &DenseTensor) -> Result<()> {
    if x.order() != layer.input_dims.len() + 1 || x.shape()[1..] != layer.input_dims[..] {
        return Err(Error::ShapeMismatch(format!(
            "contraction layer expects batch shape (S, {:?}), got {:?}",
            layer.input_dims,
            x.shape()
        )));
    }
    Ok(())
}

/// Forward pass: `x ×_1 V^(0) ×_2 V^(1) ... ×_{N+1} V^(N)`. Projections
/// start at the second tensor mode because mode 0 is the batch.
pub fn tcl_forward(layer: &TclLayer, x: &DenseTensor) -> Result<DenseTensor> {
    check_input(layer, x)?;
    let mut y = x.clone();
    for (k, v) in layer.factors.iter().enumerate() {
        y = n_mode_product(&y, v, k + 1)?;
    }
    Ok(y)
}

/// Gradients of a scalar loss with respect to every factor and the input.
#[derive(Debug, Clone)]
pub struct TclGradients {
    /// One gradient per factor, same shapes as the factors.
    pub factors: Vec<Matrix>,
    /// Gradient with respect to the input batch, for chaining.
    pub input: DenseTensor,
}

/// Backward pass. For factor `k`, the forward unfolds to
/// `X'_[k+1] = V^(k) * Y_[k+1]` with `Y` the input contracted by every other
/// factor, so the gradient is `G_[k+1] * Y_[k+1]^T` with `G` the upstream
/// gradient; the input gradient applies each factor transpose along its mode.
pub fn tcl_backward(
    layer: &TclLayer,
    x: &DenseTensor,
    upstream: &DenseTensor,
) -> Result<TclGradients> {
    check_input(layer, x)?;
    let batch = x.shape()[0];
    let mut expected = vec![batch];
    expected.extend_from_slice(&layer.output_ranks);
    if upstream.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?}, expected {:?}",
            upstream.shape(),
            expected
        )));
    }

    let mut factor_grads = Vec::with_capacity(layer.factors.len());
    for k in 0..layer.factors.len() {
        let mut partial = x.clone();
        for (j, v) in layer.factors.iter().enumerate() {
            if j != k {
                partial = n_mode_product(&partial, v, j + 1)?;
            }
        }
        let g = unfold(upstream, k + 1)?;
        let y = unfold(&partial, k + 1)?;
        factor_grads.push(g.matmul_nt(&y)?);
    }

    let mut input_grad = upstream.clone();
    for (k, v) in layer.factors.iter().enumerate() {
        input_grad = n_mode_product(&input_grad, &v.transpose(), k + 1)?;
    }

    Ok(TclGradients {
        factors: factor_grads,
        input: input_grad,
    })
}
