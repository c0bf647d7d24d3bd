//! Fully-connected baseline layer operating on flattened activations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

use super::uniform_fanin;

/// Dense affine map: weight `(prod I_k, O)` plus bias of length `O`.
/// Inputs of any order are flattened over their non-batch modes.
#[derive(Debug, Clone)]
pub struct FcLayer {
    weight: Matrix,
    bias: Vec<f64>,
}

impl FcLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} vs weight columns {}",
                bias.len(),
                weight.cols()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn random<R: Rng>(input_len: usize, output_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_fanin(input_len, output_dim, input_len, rng),
            bias: vec![0.0; output_dim],
        }
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn input_len(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Bias excluded, matching the dense parameter-count convention.
    pub fn param_count(&self) -> u64 {
        self.weight.rows() as u64 * self.weight.cols() as u64
    }
}

fn flatten_batch(layer: &FcLayer, x: &DenseTensor) -> Result<Matrix> {
    let batch = x.shape()[0];
    let features: usize = x.shape()[1..].iter().product();
    if features != layer.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "input flattens to {features} features, weight expects {}",
            layer.input_len()
        )));
    }
    Matrix::new(batch, features, x.data().to_vec())
}

/// `y = flatten(x) * W + b`, returning the `(S, O)` output matrix.
pub fn fc_forward(layer: &FcLayer, x: &DenseTensor) -> Result<Matrix> {
    let x_mat = flatten_batch(layer, x)?;
    let mut y = x_mat.matmul(&layer.weight)?;
    let cols = y.cols();
    for r in 0..y.rows() {
        let row = &mut y.data_mut()[r * cols..(r + 1) * cols];
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct FcGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: DenseTensor,
}

pub fn fc_backward(layer: &FcLayer, x: &DenseTensor, upstream: &Matrix) -> Result<FcGradients> {
    let x_mat = flatten_batch(layer, x)?;
    if upstream.rows() != x_mat.rows() || upstream.cols() != layer.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            upstream.rows(),
            upstream.cols(),
            x_mat.rows(),
            layer.output_dim()
        )));
    }
    let weight_grad = x_mat.matmul_tn(upstream)?;
    let mut bias_grad = vec![0.0; layer.output_dim()];
    for r in 0..upstream.rows() {
        for (g, &v) in bias_grad.iter_mut().zip(upstream.row(r)) {
            *g += v;
        }
    }
    let input_grad_mat = upstream.matmul_nt(&layer.weight)?;
    let input = DenseTensor::new(x.shape().to_vec(), input_grad_mat.into_tensor().data().to_vec())?;
    Ok(FcGradients {
        weight: weight_grad,
        bias: bias_grad,
        input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_affine() {
        let w = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let layer = FcLayer::new(w, vec![10.0, 20.0]).unwrap();
        let x = DenseTensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let y = fc_forward(&layer, &x).unwrap();
        assert_eq!(y.data(), &[14.0, 26.0]);
    }

    #[test]
    fn flattens_higher_order_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = FcLayer::random(6, 2, &mut rng);
        let x = DenseTensor::gaussian(&[3, 2, 3], 1.0, &mut rng);
        let y = fc_forward(&layer, &x).unwrap();
        assert_eq!((y.rows(), y.cols()), (3, 2));
        let flat = DenseTensor::new(vec![3, 6], x.data().to_vec()).unwrap();
        let y2 = fc_forward(&layer, &flat).unwrap();
        assert_eq!(y.data(), y2.data());
    }

    #[test]
    fn param_count_excludes_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = FcLayer::random(2048, 1000, &mut rng);
        assert_eq!(layer.param_count(), 2_048_000);
    }

    #[test]
    fn backward_matches_hand_derivation() {
        // y = x W + b; for upstream G: dW = x^T G, db = col sums, dx = G W^T.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = FcLayer::random(3, 2, &mut rng);
        let x = DenseTensor::gaussian(&[4, 3], 1.0, &mut rng);
        let g = Matrix::gaussian(4, 2, 1.0, &mut rng);
        let grads = fc_backward(&layer, &x, &g).unwrap();
        let x_mat = Matrix::from_tensor(x.clone()).unwrap();
        let dw = x_mat.matmul_tn(&g).unwrap();
        for (a, b) in grads.weight.data().iter().zip(dw.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let dx = g.matmul_nt(&layer.weight().clone()).unwrap();
        for (a, b) in grads.input.data().iter().zip(dx.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = FcLayer::random(6, 2, &mut rng);
        let x = DenseTensor::zeros(&[3, 5]);
        assert!(fc_forward(&layer, &x).is_err());
    }
}
