//! Low-rank tensor regression layer: an affine map from an activation
//! tensor to an output vector whose weight tensor is held in Tucker form.
//!
//! The weight `W` of shape `(I_0, ..., I_N, O)` is never materialized on
//! the training path: the forward projects the input by each input-factor
//! transpose, contracts with the core, and expands through the output
//! factor. A materializing evaluation path exists for verification.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{generalized_inner_product, n_mode_product, unfold, DenseTensor, Matrix};
use crate::tucker::{partial_tucker, tucker_reconstruct, TuckerTensor, DEFAULT_MAX_ITER, DEFAULT_TOL};

use super::fc::FcLayer;
use super::uniform_fanin;

/// Tucker-factored regression weight plus bias.
///
/// `core` has shape `(R_0, ..., R_N, R_out)`; input factor `k` is
/// `I_k x R_k`, the output factor is `O x R_out`, and the bias has length
/// `O`. Parameter count (bias excluded) is
/// `prod R + sum_k R_k * I_k + R_out * O`.
#[derive(Debug, Clone)]
pub struct TrlLayer {
    core: DenseTensor,
    input_factors: Vec<Matrix>,
    output_factor: Matrix,
    bias: Vec<f64>,
}

impl TrlLayer {
    pub fn new(
        core: DenseTensor,
        input_factors: Vec<Matrix>,
        output_factor: Matrix,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if core.order() != input_factors.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "core order {} does not match {} input factors + output factor",
                core.order(),
                input_factors.len()
            )));
        }
        for (k, f) in input_factors.iter().enumerate() {
            if f.cols() != core.shape()[k] {
                return Err(Error::ShapeMismatch(format!(
                    "input factor {k} has {} columns, core dimension is {}",
                    f.cols(),
                    core.shape()[k]
                )));
            }
        }
        let r_out = *core.shape().last().unwrap();
        if output_factor.cols() != r_out {
            return Err(Error::ShapeMismatch(format!(
                "output factor has {} columns, core output rank is {r_out}",
                output_factor.cols()
            )));
        }
        if bias.len() != output_factor.rows() {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} vs output dimension {}",
                bias.len(),
                output_factor.rows()
            )));
        }
        Ok(Self {
            core,
            input_factors,
            output_factor,
            bias,
        })
    }

    /// Random layer. `ranks` holds `(R_0, ..., R_N, R_out)`; factors are
    /// uniform with fan-in scaling (input factors see `I_k` inputs, the
    /// core sees `prod R_k`, the output factor sees `R_out`) and the bias
    /// starts at zero.
    pub fn random<R: Rng>(
        input_dims: &[usize],
        ranks: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if ranks.len() != input_dims.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} ranks (one per input mode plus output), got {}",
                input_dims.len() + 1,
                ranks.len()
            )));
        }
        for (k, (&d, &r)) in input_dims.iter().zip(ranks).enumerate() {
            if r == 0 || r > d {
                return Err(Error::RankTooLarge { mode: k, rank: r, dim: d });
            }
        }
        let r_out = *ranks.last().unwrap();
        if r_out == 0 {
            return Err(Error::InvalidArgument("output rank must be >= 1".into()));
        }
        let input_factors = input_dims
            .iter()
            .zip(ranks)
            .map(|(&d, &r)| uniform_fanin(d, r, d, rng))
            .collect();
        let in_rank_prod: usize = ranks[..input_dims.len()].iter().product();
        let core = {
            let s = 1.0 / (in_rank_prod.max(1) as f64).sqrt();
            DenseTensor::uniform(ranks, -s, s, rng)
        };
        let output_factor = uniform_fanin(output_dim, r_out, r_out, rng);
        Self::new(core, input_factors, output_factor, vec![0.0; output_dim])
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn core_mut(&mut self) -> &mut DenseTensor {
        &mut self.core
    }

    pub fn input_factors(&self) -> &[Matrix] {
        &self.input_factors
    }

    pub fn input_factors_mut(&mut self) -> &mut [Matrix] {
        &mut self.input_factors
    }

    pub fn output_factor(&self) -> &Matrix {
        &self.output_factor
    }

    pub fn output_factor_mut(&mut self) -> &mut Matrix {
        &mut self.output_factor
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.input_factors.iter().map(Matrix::rows).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.output_factor.rows()
    }

    /// `(R_0, ..., R_N, R_out)`.
    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    /// Bias excluded.
    pub fn param_count(&self) -> u64 {
        trl_param_count(&self.input_dims(), self.ranks(), self.output_dim())
    }

    /// Materializes `W = G x_0 U^(0) ... x_{N+1} U^(N+1)` with shape
    /// `(I_0, ..., I_N, O)`.
    pub fn materialized_weight(&self) -> Result<DenseTensor> {
        let mut factors: Vec<Matrix> = self.input_factors.clone();
        factors.push(self.output_factor.clone());
        let t = TuckerTensor::new(self.core.clone(), factors)?;
        tucker_reconstruct(&t)
    }
}

/// `prod_{k=0}^{N+1} R_k + sum_{k=0}^{N} R_k * I_k + R_out * O`, bias excluded.
pub fn trl_param_count(input_dims: &[usize], ranks: &[usize], output_dim: usize) -> u64 {
    assert_eq!(ranks.len(), input_dims.len() + 1, "one rank per input mode plus output");
    let core: u64 = ranks.iter().map(|&r| r as u64).product();
    let factors: u64 = input_dims
        .iter()
        .zip(ranks)
        .map(|(&d, &r)| d as u64 * r as u64)
        .sum();
    let out = *ranks.last().unwrap() as u64 * output_dim as u64;
    core + factors + out
}

/// `O * prod I_k`, bias excluded.
pub fn fc_param_count(input_dims: &[usize], output_dim: usize) -> u64 {
    output_dim as u64 * input_dims.iter().map(|&d| d as u64).product::<u64>()
}

fn check_input(layer: &TrlLayer, x: &DenseTensor) -> Result<usize> {
    let dims = layer.input_dims();
    if x.order() != dims.len() + 1 || x.shape()[1..] != dims[..] {
        return Err(Error::ShapeMismatch(format!(
            "regression layer expects batch shape (S, {:?}), got {:?}",
            dims,
            x.shape()
        )));
    }
    Ok(x.shape()[0])
}

// Projects the batch by each input-factor transpose: (S, R_0, ..., R_N).
fn project_input(layer: &TrlLayer, x: &DenseTensor) -> Result<DenseTensor> {
    let mut z = x.clone();
    for (k, u) in layer.input_factors.iter().enumerate() {
        z = n_mode_product(&z, &u.transpose(), k + 1)?;
    }
    Ok(z)
}

fn core_as_matrix(layer: &TrlLayer) -> Matrix {
    let r_out = *layer.core.shape().last().unwrap();
    let r_in: usize = layer.core.len() / r_out;
    Matrix::new(r_in, r_out, layer.core.data().to_vec()).expect("core reshape")
}

fn add_bias(mut y: Matrix, bias: &[f64]) -> Matrix {
    let cols = y.cols();
    for r in 0..y.rows() {
        let row = &mut y.data_mut()[r * cols..(r + 1) * cols];
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// Forward pass on the factorized path: project the input by each input
/// factor transpose, contract with the core, expand through the output
/// factor, and add the bias. Returns the `(S, O)` output matrix. Equals
/// `<x, W>_{N+1} + b` with `W` the materialized weight.
pub fn trl_forward(layer: &TrlLayer, x: &DenseTensor) -> Result<Matrix> {
    let batch = check_input(layer, x)?;
    let z = project_input(layer, x)?;
    let r_in: usize = z.len() / batch;
    let z_mat = Matrix::new(batch, r_in, z.data().to_vec())?;
    let t = z_mat.matmul(&core_as_matrix(layer))?; // (S, R_out)
    let y = t.matmul_nt(&layer.output_factor)?; // (S, O)
    Ok(add_bias(y, &layer.bias))
}

/// Verification path: materializes the weight and contracts directly.
pub fn trl_forward_materialized(layer: &TrlLayer, x: &DenseTensor) -> Result<Matrix> {
    check_input(layer, x)?;
    let w = layer.materialized_weight()?;
    let y = generalized_inner_product(x, &w, layer.input_factors.len() + 1)?;
    Ok(add_bias(y, &layer.bias))
}

/// Gradients of a scalar loss with respect to every parameter group and
/// the input.
#[derive(Debug, Clone)]
pub struct TrlGradients {
    pub core: DenseTensor,
    pub input_factors: Vec<Matrix>,
    pub output_factor: Matrix,
    pub bias: Vec<f64>,
    pub input: DenseTensor,
}

/// Backward pass on the factorized path.
///
/// With `z` the projected input, `T = z * G` and `Y = T * U_out^T + b`:
/// the bias gradient is the column sum of the upstream, the output-factor
/// gradient is `Gy^T * T`, the core gradient is `z^T * (Gy * U_out)`, input
/// factor `k` gets `unfold_k(partial projection) * unfold_k(P)^T` with
/// `P = (Gy * U_out) * G^T`, and the input gradient expands `P` back by
/// each input factor.
pub fn trl_backward(
    layer: &TrlLayer,
    x: &DenseTensor,
    upstream: &Matrix,
) -> Result<TrlGradients> {
    let batch = check_input(layer, x)?;
    let o = layer.output_dim();
    if upstream.rows() != batch || upstream.cols() != o {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {}x{}, expected {batch}x{o}",
            upstream.rows(),
            upstream.cols()
        )));
    }
    let n_in = layer.input_factors.len();
    let ranks = layer.core.shape().to_vec();
    let r_in_prod: usize = ranks[..n_in].iter().product();

    let mut bias_grad = vec![0.0; o];
    for r in 0..batch {
        for (g, &v) in bias_grad.iter_mut().zip(upstream.row(r)) {
            *g += v;
        }
    }

    let z = project_input(layer, x)?;
    let z_mat = Matrix::new(batch, r_in_prod, z.data().to_vec())?;
    let g_mat = core_as_matrix(layer);

    let t = z_mat.matmul(&g_mat)?; // (S, R_out)
    let output_factor_grad = upstream.matmul_tn(&t)?; // (O, R_out)

    let q = upstream.matmul(&layer.output_factor)?; // (S, R_out)
    let core_grad_mat = z_mat.matmul_tn(&q)?; // (prod R_in, R_out)
    let core_grad = DenseTensor::new(ranks.clone(), core_grad_mat.data().to_vec())?;

    let p_mat = q.matmul_nt(&g_mat)?; // (S, prod R_in)
    let mut p_shape = vec![batch];
    p_shape.extend_from_slice(&ranks[..n_in]);
    let p = DenseTensor::new(p_shape, p_mat.data().to_vec())?;

    let mut input_factor_grads = Vec::with_capacity(n_in);
    for k in 0..n_in {
        let mut partial = x.clone();
        for (j, u) in layer.input_factors.iter().enumerate() {
            if j != k {
                partial = n_mode_product(&partial, &u.transpose(), j + 1)?;
            }
        }
        let yk = unfold(&partial, k + 1)?; // (I_k, ...)
        let pk = unfold(&p, k + 1)?; // (R_k, ...)
        input_factor_grads.push(yk.matmul_nt(&pk)?); // (I_k, R_k)
    }

    let mut input_grad = p;
    for (k, u) in layer.input_factors.iter().enumerate() {
        input_grad = n_mode_product(&input_grad, u, k + 1)?;
    }

    Ok(TrlGradients {
        core: core_grad,
        input_factors: input_factor_grads,
        output_factor: output_factor_grad,
        bias: bias_grad,
        input: input_grad,
    })
}

/// Initializes a regression layer from a pre-trained fully-connected layer
/// acting on pooled features.
///
/// `input_dims` are the layer's activation dims `(I_0, ..., I_N)`;
/// `spatial_modes` marks the modes pooled away before the original layer,
/// so the fully-connected weight must have `prod of non-spatial dims` rows.
/// The weight is viewed as a tensor with singleton spatial dims, the
/// non-spatial weight modes are partial-Tucker-decomposed, and each spatial
/// mode receives a rank-1 factor with constant entries `1/I_m`. The result
/// initially computes the original layer composed with spatial average
/// pooling, up to the decomposition's reconstruction error.
pub fn init_trl_from_linear(
    fc: &FcLayer,
    input_dims: &[usize],
    spatial_modes: &BTreeSet<usize>,
    ranks: &[usize],
) -> Result<TrlLayer> {
    let n_in = input_dims.len();
    if ranks.len() != n_in + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} ranks, got {}",
            n_in + 1,
            ranks.len()
        )));
    }
    if let Some(&m) = spatial_modes.iter().find(|&&m| m >= n_in) {
        return Err(Error::ModeOutOfRange { mode: m, order: n_in });
    }
    for &m in spatial_modes {
        if ranks[m] != 1 {
            return Err(Error::InvalidArgument(format!(
                "spatial mode {m} must have rank 1, got {}",
                ranks[m]
            )));
        }
    }
    let output_dim = fc.output_dim();
    let r_out = *ranks.last().unwrap();
    if r_out == 0 || r_out > output_dim {
        return Err(Error::RankTooLarge {
            mode: n_in,
            rank: r_out,
            dim: output_dim,
        });
    }
    let non_spatial: Vec<usize> = (0..n_in).filter(|m| !spatial_modes.contains(m)).collect();
    for &k in &non_spatial {
        if ranks[k] == 0 || ranks[k] > input_dims[k] {
            return Err(Error::RankTooLarge {
                mode: k,
                rank: ranks[k],
                dim: input_dims[k],
            });
        }
    }
    let pooled_rows: usize = non_spatial.iter().map(|&k| input_dims[k]).product();
    if fc.weight().rows() != pooled_rows {
        return Err(Error::ShapeMismatch(format!(
            "fully-connected weight has {} rows, expected {} (= product of non-spatial dims)",
            fc.weight().rows(),
            pooled_rows
        )));
    }

    // View the weight as (d_0, ..., d_N, O) with singleton spatial dims;
    // inserting size-1 modes leaves the row-major buffer unchanged.
    let mut w_shape: Vec<usize> = (0..n_in)
        .map(|m| if spatial_modes.contains(&m) { 1 } else { input_dims[m] })
        .collect();
    w_shape.push(output_dim);
    let w = DenseTensor::new(w_shape, fc.weight().data().to_vec())?;

    let mut modes: Vec<usize> = non_spatial.clone();
    modes.push(n_in); // output mode
    let mode_ranks: Vec<usize> = non_spatial
        .iter()
        .map(|&k| ranks[k])
        .chain(std::iter::once(r_out))
        .collect();
    let (decomp, _) = partial_tucker(&w, &modes, &mode_ranks, DEFAULT_MAX_ITER, DEFAULT_TOL)?;

    let mut input_factors = Vec::with_capacity(n_in);
    for m in 0..n_in {
        if spatial_modes.contains(&m) {
            let d = input_dims[m];
            input_factors.push(Matrix::new(d, 1, vec![1.0 / d as f64; d])?);
        } else {
            input_factors.push(
                decomp
                    .factor_for_mode(m)
                    .expect("non-spatial mode has a factor")
                    .clone(),
            );
        }
    }
    let output_factor = decomp
        .factor_for_mode(n_in)
        .expect("output mode has a factor")
        .clone();
    TrlLayer::new(
        decomp.core().clone(),
        input_factors,
        output_factor,
        fc.bias().to_vec(),
    )
}

/// Rescales every factor column to unit l2 norm, absorbing the inverse
/// scales into the core so the materialized weight is unchanged.
pub fn normalize_trl_factors(layer: &mut TrlLayer) -> Result<()> {
    let n_in = layer.input_factors.len();
    for mode in 0..=n_in {
        let factor = if mode < n_in {
            &mut layer.input_factors[mode]
        } else {
            &mut layer.output_factor
        };
        let norms = factor.column_l2_norms();
        if let Some(j) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::DegenerateFactor(format!(
                "zero-norm column {j} in factor for mode {mode}"
            )));
        }
        let inv: Vec<f64> = norms.iter().map(|&n| 1.0 / n).collect();
        factor.scale_columns(&inv);
        let mut diag = Matrix::zeros(norms.len(), norms.len());
        for (j, &n) in norms.iter().enumerate() {
            diag.set(j, j, n);
        }
        layer.core = n_mode_product(&layer.core, &diag, mode)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn order_one_identity_factors_reduce_to_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Matrix::gaussian(4, 3, 1.0, &mut rng);
        let layer = TrlLayer::new(
            w.as_tensor().clone(),
            vec![Matrix::identity(4)],
            Matrix::identity(3),
            vec![0.5, -1.0, 2.0],
        )
        .unwrap();
        let x = DenseTensor::gaussian(&[5, 4], 1.0, &mut rng);
        let y = trl_forward(&layer, &x).unwrap();
        let x_mat = Matrix::from_tensor(x).unwrap();
        let mut expected = x_mat.matmul(&w).unwrap();
        for r in 0..5 {
            for (c, b) in [0.5, -1.0, 2.0].iter().enumerate() {
                let v = expected.get(r, c) + b;
                expected.set(r, c, v);
            }
        }
        assert!(max_abs_diff(y.data(), expected.data()) < 1e-12);
    }

    #[test]
    fn factorized_path_matches_materialized_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let layer = TrlLayer::random(&[4, 3, 2], &[2, 2, 2, 3], 5, &mut rng).unwrap();
            let x = DenseTensor::gaussian(&[3, 4, 3, 2], 1.0, &mut rng);
            let fast = trl_forward(&layer, &x).unwrap();
            let slow = trl_forward_materialized(&layer, &x).unwrap();
            let scale = slow.frobenius_norm().max(1.0);
            assert!(max_abs_diff(fast.data(), slow.data()) / scale < 1e-10);
        }
    }

    #[test]
    fn shape_contract_with_large_channel_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = TrlLayer::random(&[2048, 7, 7], &[4, 1, 1, 4], 1000, &mut rng).unwrap();
        let x = DenseTensor::gaussian(&[2, 2048, 7, 7], 1.0, &mut rng);
        let y = trl_forward(&layer, &x).unwrap();
        assert_eq!((y.rows(), y.cols()), (2, 1000));
    }

    #[test]
    fn param_count_examples() {
        assert_eq!(
            trl_param_count(&[2048, 7, 7], &[200, 1, 1, 200], 1000),
            649_614
        );
        assert_eq!(fc_param_count(&[2048], 1000), 2_048_000);
        assert_eq!(trl_param_count(&[1], &[1, 1], 1), 3);
    }

    #[test]
    fn full_rank_count_can_exceed_dense_count() {
        let n_trl = trl_param_count(&[4, 4], &[4, 4, 3], 3);
        let n_fc = fc_param_count(&[4, 4], 3);
        assert!(n_trl > n_fc);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = TrlLayer::random(&[3, 2], &[2, 2, 2], 4, &mut rng).unwrap();
        let x = DenseTensor::gaussian(&[3, 3, 2], 1.0, &mut rng);
        let upstream = Matrix::zeros(3, 4);
        let g = trl_backward(&layer, &x, &upstream).unwrap();
        assert!(g.core.data().iter().all(|&v| v == 0.0));
        assert!(g.output_factor.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        for f in &g.input_factors {
            assert!(f.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn order_one_identity_core_gradient_is_xt_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = TrlLayer::new(
            Matrix::gaussian(4, 3, 1.0, &mut rng).into_tensor(),
            vec![Matrix::identity(4)],
            Matrix::identity(3),
            vec![0.0; 3],
        )
        .unwrap();
        let x = DenseTensor::gaussian(&[6, 4], 1.0, &mut rng);
        let upstream = Matrix::gaussian(6, 3, 1.0, &mut rng);
        let g = trl_backward(&layer, &x, &upstream).unwrap();
        let x_mat = Matrix::from_tensor(x).unwrap();
        let expected = x_mat.matmul_tn(&upstream).unwrap();
        assert!(max_abs_diff(g.core.data(), expected.data()) < 1e-10);
    }

    #[test]
    fn bias_gradient_is_column_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = TrlLayer::random(&[3], &[2, 2], 2, &mut rng).unwrap();
        let x = DenseTensor::gaussian(&[4, 3], 1.0, &mut rng);
        let upstream = Matrix::gaussian(4, 2, 1.0, &mut rng);
        let g = trl_backward(&layer, &x, &upstream).unwrap();
        for c in 0..2 {
            let want: f64 = (0..4).map(|r| upstream.get(r, c)).sum();
            assert!((g.bias[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn init_from_linear_matches_pool_then_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (c, h, w, o) = (6, 3, 4, 5);
        let fc = FcLayer::random(c, o, &mut rng);
        let spatial: BTreeSet<usize> = [1, 2].into_iter().collect();
        // Full rank on the non-spatial modes: exact reconstruction.
        let layer =
            init_trl_from_linear(&fc, &[c, h, w], &spatial, &[c, 1, 1, o.min(c)]).unwrap();
        let x = DenseTensor::gaussian(&[3, c, h, w], 1.0, &mut rng);
        let y = trl_forward(&layer, &x).unwrap();

        // Oracle: average-pool the spatial dims, then apply the affine map.
        let mut pooled = DenseTensor::zeros(&[3, c]);
        for s in 0..3 {
            for ci in 0..c {
                let mut acc = 0.0;
                for hi in 0..h {
                    for wi in 0..w {
                        acc += x.get(&[s, ci, hi, wi]);
                    }
                }
                pooled.set(&[s, ci], acc / (h * w) as f64);
            }
        }
        let expected = crate::layers::fc_forward(&fc, &pooled).unwrap();
        let scale = expected.frobenius_norm().max(1.0);
        assert!(
            max_abs_diff(y.data(), expected.data()) / scale < 1e-8,
            "diff {}",
            max_abs_diff(y.data(), expected.data())
        );
    }

    #[test]
    fn init_from_linear_spatial_factors_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fc = FcLayer::random(5, 4, &mut rng);
        let spatial: BTreeSet<usize> = [1, 2].into_iter().collect();
        let layer = init_trl_from_linear(&fc, &[5, 7, 7], &spatial, &[3, 1, 1, 3]).unwrap();
        for m in [1, 2] {
            let f = &layer.input_factors()[m];
            assert_eq!((f.rows(), f.cols()), (7, 1));
            for r in 0..7 {
                assert!((f.get(r, 0) - 1.0 / 7.0).abs() < 1e-15);
            }
        }
        assert_eq!(layer.bias(), fc.bias());
    }

    #[test]
    fn init_from_linear_rejects_bad_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fc = FcLayer::random(5, 4, &mut rng);
        let spatial: BTreeSet<usize> = [1, 2].into_iter().collect();
        // Spatial rank != 1.
        assert!(init_trl_from_linear(&fc, &[5, 7, 7], &spatial, &[3, 2, 1, 3]).is_err());
        // Rank exceeding the channel dim.
        assert!(init_trl_from_linear(&fc, &[5, 7, 7], &spatial, &[6, 1, 1, 3]).is_err());
        // Wrong weight row count.
        assert!(init_trl_from_linear(&fc, &[6, 7, 7], &spatial, &[3, 1, 1, 3]).is_err());
    }

    #[test]
    fn normalize_preserves_weight_and_unit_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut layer = TrlLayer::random(&[4, 3], &[2, 2, 3], 5, &mut rng).unwrap();
        let before = layer.materialized_weight().unwrap();
        normalize_trl_factors(&mut layer).unwrap();
        let after = layer.materialized_weight().unwrap();
        let scale = before.frobenius_norm().max(1.0);
        assert!(max_abs_diff(before.data(), after.data()) / scale < 1e-12);
        for f in layer.input_factors().iter().chain([layer.output_factor()]) {
            for n in f.column_l2_norms() {
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = TrlLayer::random(&[3], &[2, 2], 2, &mut rng).unwrap();
        for r in 0..3 {
            layer.input_factors_mut()[0].set(r, 1, 0.0);
        }
        assert!(matches!(
            normalize_trl_factors(&mut layer),
            Err(Error::DegenerateFactor(_))
        ));
    }
}
