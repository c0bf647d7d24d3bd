//! Batch normalization over the flattened non-batch modes, with learned
//! scale/shift and running statistics for evaluation mode.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-feature standardization state. An input batch `(S, D_0, ..., D_N)`
/// is treated as `(S, F)` with `F = prod D_k`.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Folds a batch's statistics into the running estimates.
    pub fn update_running(&mut self, cache: &BnCache) {
        let m = self.momentum;
        for f in 0..self.features() {
            self.running_mean[f] = m * self.running_mean[f] + (1.0 - m) * cache.batch_mean[f];
            self.running_var[f] = m * self.running_var[f] + (1.0 - m) * cache.batch_var[f];
        }
    }
}

/// Intermediate values needed by the backward pass and the running-stat
/// update. Produced by [`batch_norm_forward_train`].
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    batch: usize,
    shape: Vec<usize>,
}

fn check_features(bn: &BatchNorm, x: &DenseTensor) -> Result<(usize, usize)> {
    let batch = x.shape()[0];
    let features: usize = x.shape()[1..].iter().product();
    if features != bn.features() {
        return Err(Error::ShapeMismatch(format!(
            "batch norm over {} features, input flattens to {features}",
            bn.features()
        )));
    }
    Ok((batch, features))
}

/// Training-mode forward: standardize by batch statistics (biased variance),
/// then scale and shift. Pure; running statistics are folded in separately
/// via [`BatchNorm::update_running`], so finite-difference probes do not
/// perturb state.
pub fn batch_norm_forward_train(bn: &BatchNorm, x: &DenseTensor) -> Result<(DenseTensor, BnCache)> {
    let (batch, features) = check_features(bn, x)?;
    if batch < 2 {
        return Err(Error::BatchTooSmall(batch));
    }
    let data = x.data();
    let mut mean = vec![0.0; features];
    for s in 0..batch {
        for (f, m) in mean.iter_mut().enumerate() {
            *m += data[s * features + f];
        }
    }
    for m in &mut mean {
        *m /= batch as f64;
    }
    let mut var = vec![0.0; features];
    for s in 0..batch {
        for (f, v) in var.iter_mut().enumerate() {
            let d = data[s * features + f] - mean[f];
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= batch as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + bn.epsilon).sqrt()).collect();

    let mut x_hat = vec![0.0; batch * features];
    let mut out = vec![0.0; batch * features];
    for s in 0..batch {
        for f in 0..features {
            let h = (data[s * features + f] - mean[f]) * inv_std[f];
            x_hat[s * features + f] = h;
            out[s * features + f] = bn.gamma[f] * h + bn.beta[f];
        }
    }
    let y = DenseTensor::new(x.shape().to_vec(), out)?;
    Ok((
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            batch,
            shape: x.shape().to_vec(),
        },
    ))
}

/// Evaluation-mode forward: standardize by the running statistics.
pub fn batch_norm_forward_eval(bn: &BatchNorm, x: &DenseTensor) -> Result<DenseTensor> {
    let (batch, features) = check_features(bn, x)?;
    let data = x.data();
    let mut out = vec![0.0; batch * features];
    for s in 0..batch {
        for f in 0..features {
            let inv = 1.0 / (bn.running_var[f] + bn.epsilon).sqrt();
            out[s * features + f] =
                bn.gamma[f] * (data[s * features + f] - bn.running_mean[f]) * inv + bn.beta[f];
        }
    }
    DenseTensor::new(x.shape().to_vec(), out)
}

#[derive(Debug, Clone)]
pub struct BnGradients {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub input: DenseTensor,
}

/// Training-mode backward through the batch statistics.
pub fn batch_norm_backward(
    bn: &BatchNorm,
    cache: &BnCache,
    upstream: &DenseTensor,
) -> Result<BnGradients> {
    let batch = cache.batch;
    let features = bn.features();
    if upstream.shape() != cache.shape {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?}, expected {:?}",
            upstream.shape(),
            cache.shape
        )));
    }
    let g = upstream.data();
    let mut gamma_grad = vec![0.0; features];
    let mut beta_grad = vec![0.0; features];
    let mut sum_gxh = vec![0.0; features]; // sum over batch of gamma-scaled upstream
    let mut sum_gxh_xhat = vec![0.0; features];
    for s in 0..batch {
        for f in 0..features {
            let up = g[s * features + f];
            let h = cache.x_hat[s * features + f];
            beta_grad[f] += up;
            gamma_grad[f] += up * h;
            let gxh = up * bn.gamma[f];
            sum_gxh[f] += gxh;
            sum_gxh_xhat[f] += gxh * h;
        }
    }
    let mut input = vec![0.0; batch * features];
    let inv_batch = 1.0 / batch as f64;
    for s in 0..batch {
        for f in 0..features {
            let gxh = g[s * features + f] * bn.gamma[f];
            let h = cache.x_hat[s * features + f];
            input[s * features + f] = cache.inv_std[f]
                * (gxh - inv_batch * sum_gxh[f] - h * inv_batch * sum_gxh_xhat[f]);
        }
    }
    Ok(BnGradients {
        gamma: gamma_grad,
        beta: beta_grad,
        input: DenseTensor::new(cache.shape.clone(), input)?,
    })
}
