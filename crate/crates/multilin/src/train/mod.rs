//! Training harness: synthetic regression data, mini-batch SGD with squared
//! loss, batch normalization, and RMSE evaluation.
//!
//! Everything is deterministic under the configured seeds: data generation
//! and parameter initialization use counter-based RNG streams, and batches
//! are visited in a fixed sequential order.

pub mod batchnorm;
mod model;

pub use batchnorm::{
    batch_norm_backward, batch_norm_forward_eval, batch_norm_forward_train, BatchNorm, BnCache,
    BnGradients, BN_EPSILON, BN_MOMENTUM,
};
pub use model::{LayerCache, LayerGrads, Model, ModelLayer, ParamGroup, ParamSlot};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{FcLayer, TclLayer, TrlLayer};
use crate::tensor::{generalized_inner_product, DenseTensor, Matrix};

/// Shape of the synthetic ground-truth regression weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrueWeight {
    /// Dense i.i.d. Gaussian weight (no exploitable structure).
    DenseRandom,
    /// Random Tucker-form weight with the given multilinear ranks for the
    /// `(I_0, ..., I_N, O)` weight tensor.
    LowMultilinearRank(Vec<usize>),
}

/// Configuration of the synthetic regression problem: inputs are i.i.d.
/// Gaussian, labels come from an exact linear map on the clean inputs, and
/// training inputs carry added Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub input_shape: Vec<usize>,
    pub num_train: usize,
    pub num_test: usize,
    pub output_dim: usize,
    /// Standard deviation of the input entries. The default `sqrt(3)`
    /// reads a variance-3 Gaussian in the usual N(mean, variance) sense.
    pub signal_std: f64,
    /// Standard deviation of the noise added to training inputs.
    pub noise_std: f64,
    pub true_weight: TrueWeight,
    /// When set, test inputs also carry added noise; by default tests are
    /// clean so the score isolates recovery of the true map.
    pub noisy_test: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            input_shape: vec![64, 64],
            num_train: 200,
            num_test: 5000,
            output_dim: 1,
            signal_std: 3f64.sqrt(),
            noise_std: 3f64.sqrt(),
            true_weight: TrueWeight::LowMultilinearRank(vec![4, 4, 1]),
            noisy_test: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        if self.num_train == 0 || self.num_test == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("counts must be positive".into()));
        }
        if self.signal_std < 0.0 || self.noise_std < 0.0 {
            return Err(Error::InvalidArgument("standard deviations must be non-negative".into()));
        }
        if let TrueWeight::LowMultilinearRank(ranks) = &self.true_weight {
            let mut dims = self.input_shape.clone();
            dims.push(self.output_dim);
            if ranks.len() != dims.len() {
                return Err(Error::InvalidArgument(format!(
                    "true-weight ranks {ranks:?} do not match weight order {}",
                    dims.len()
                )));
            }
            for (mode, (&r, &d)) in ranks.iter().zip(&dims).enumerate() {
                if r == 0 || r > d {
                    return Err(Error::RankTooLarge { mode, rank: r, dim: d });
                }
            }
        }
        Ok(())
    }
}

/// A batch of inputs `(n, I_0, ..., I_N)` with labels `(n, O)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: DenseTensor,
    pub labels: Matrix,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies rows `start..end` into a standalone batch.
    pub fn slice(&self, start: usize, end: usize) -> (DenseTensor, Matrix) {
        let feat: usize = self.inputs.shape()[1..].iter().product();
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = end - start;
        let x = DenseTensor::new(
            shape,
            self.inputs.data()[start * feat..end * feat].to_vec(),
        )
        .expect("contiguous rows");
        let o = self.labels.cols();
        let y = Matrix::new(
            end - start,
            o,
            self.labels.data()[start * o..end * o].to_vec(),
        )
        .expect("contiguous rows");
        (x, y)
    }
}

fn random_true_weight(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<DenseTensor> {
    let mut dims = spec.input_shape.clone();
    dims.push(spec.output_dim);
    let w = match &spec.true_weight {
        TrueWeight::DenseRandom => DenseTensor::gaussian(&dims, 1.0, rng),
        TrueWeight::LowMultilinearRank(ranks) => {
            let core = DenseTensor::gaussian(ranks, 1.0, rng);
            let mut t = core;
            for (mode, (&d, &r)) in dims.iter().zip(ranks).enumerate() {
                let f = Matrix::gaussian(d, r, 1.0 / (r as f64).sqrt(), rng);
                t = crate::tensor::n_mode_product(&t, &f, mode)?;
            }
            t
        }
    };
    let norm = w.frobenius_norm();
    Ok(w.scale(1.0 / norm)) // unit Frobenius norm fixes the label scale
}

fn labels_for(inputs: &DenseTensor, w: &DenseTensor) -> Result<Matrix> {
    generalized_inner_product(inputs, w, w.order() - 1)
}

/// Generates `(train, test, true_weight)`.
///
/// Labels always come from the exact linear map on clean inputs; the
/// training inputs are then perturbed by additive Gaussian noise. The same
/// seed reproduces every byte.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset, DenseTensor)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = random_true_weight(spec, &mut rng)?;

    let mut train_shape = vec![spec.num_train];
    train_shape.extend_from_slice(&spec.input_shape);
    let clean_train = DenseTensor::gaussian(&train_shape, spec.signal_std, &mut rng);
    let train_labels = labels_for(&clean_train, &w)?;
    let noise = DenseTensor::gaussian(&train_shape, spec.noise_std, &mut rng);
    let train_inputs = clean_train.add(&noise)?;

    let mut test_shape = vec![spec.num_test];
    test_shape.extend_from_slice(&spec.input_shape);
    let clean_test = DenseTensor::gaussian(&test_shape, spec.signal_std, &mut rng);
    let test_labels = labels_for(&clean_test, &w)?;
    let test_inputs = if spec.noisy_test {
        let e = DenseTensor::gaussian(&test_shape, spec.noise_std, &mut rng);
        clean_test.add(&e)?
    } else {
        clean_test
    };

    Ok((
        Dataset { inputs: train_inputs, labels: train_labels },
        Dataset { inputs: test_inputs, labels: test_labels },
        w,
    ))
}

/// SGD hyperparameters and harness flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_weight_decay: f64,
    pub seed: u64,
    /// Insert batch normalization ahead of each trainable layer when
    /// building models with the harness constructors.
    pub use_batch_norm: bool,
    /// Rescale tensor-regression factor columns to unit norm after every
    /// update, absorbing scales into the core.
    pub normalize_factors_every_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 16,
            epochs: 100,
            l2_weight_decay: 0.0,
            seed: 0,
            use_batch_norm: false,
            normalize_factors_every_step: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.l2_weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch training history. All three lists have length `epochs`.
/// Wall-clock entries are measurements, not reproducible values; every
/// other float is bit-determined by `(seed, config)` on one platform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub train_loss: Vec<f64>,
    pub test_rmse: Vec<f64>,
    pub wall_clock_secs: Vec<f64>,
}

impl RunRecord {
    pub fn final_test_rmse(&self) -> f64 {
        self.test_rmse.last().copied().unwrap_or(f64::NAN)
    }

    /// `epoch,train_loss,test_rmse` rows, epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_rmse\n");
        for (e, (l, r)) in self.train_loss.iter().zip(&self.test_rmse).enumerate() {
            s.push_str(&format!("{},{},{}\n", e + 1, l, r));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mini-batch SGD on squared loss over sequential batches.
///
/// The model is updated in place; the returned record holds per-epoch mean
/// train loss and test RMSE. A non-finite loss aborts with
/// [`Error::Diverged`].
pub fn sgd_train(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<RunRecord> {
    config.validate()?;
    let n = train.len();
    let mut record = RunRecord {
        train_loss: Vec::with_capacity(config.epochs),
        test_rmse: Vec::with_capacity(config.epochs),
        wall_clock_secs: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let t0 = Instant::now();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut start = 0usize;
        while start < n {
            let end = (start + config.batch_size).min(n);
            let (xb, yb) = train.slice(start, end);
            let loss = model.train_batch(&xb, &yb, config.learning_rate, config.l2_weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            if config.normalize_factors_every_step {
                model.normalize_trl_layers()?;
            }
            loss_sum += loss;
            batches += 1;
            start = end;
        }
        record.train_loss.push(loss_sum / batches as f64);
        record.test_rmse.push(evaluate_rmse(model, test)?);
        record.wall_clock_secs.push(t0.elapsed().as_secs_f64());
    }
    Ok(record)
}

/// Root mean squared error of the model over a dataset, evaluated in
/// inference mode (batch norm uses running statistics).
pub fn evaluate_rmse(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = data.len();
    let o = data.labels.cols();
    let chunk = 256usize;
    let mut sq_sum = 0.0;
    let mut start = 0usize;
    while start < n {
        let end = (start + chunk).min(n);
        let (xb, yb) = data.slice(start, end);
        let pred = model.forward_eval(&xb)?;
        for (p, t) in pred.data().iter().zip(yb.data()) {
            let d = p - t;
            sq_sum += d * d;
        }
        start = end;
    }
    Ok((sq_sum / (n * o) as f64).sqrt())
}

/// `[batch norm?] -> TRL` regression model with seeded initialization.
pub fn trl_model(
    input_dims: &[usize],
    ranks: &[usize],
    output_dim: usize,
    config: &TrainConfig,
) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::new();
    if config.use_batch_norm {
        layers.push(ModelLayer::BatchNorm(BatchNorm::new(
            input_dims.iter().product(),
        )));
    }
    layers.push(ModelLayer::Trl(TrlLayer::random(
        input_dims, ranks, output_dim, &mut rng,
    )?));
    Ok(Model::new(layers))
}

/// `[batch norm?] -> FC` baseline with seeded initialization.
pub fn fc_model(input_dims: &[usize], output_dim: usize, config: &TrainConfig) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let features: usize = input_dims.iter().product();
    let mut layers = Vec::new();
    if config.use_batch_norm {
        layers.push(ModelLayer::BatchNorm(BatchNorm::new(features)));
    }
    layers.push(ModelLayer::Fc(FcLayer::random(
        features, output_dim, &mut rng,
    )));
    Ok(Model::new(layers))
}

/// `[batch norm?] -> TCL -> [batch norm?] -> TRL` composition.
pub fn tcl_trl_model(
    input_dims: &[usize],
    tcl_ranks: &[usize],
    trl_ranks: &[usize],
    output_dim: usize,
    config: &TrainConfig,
) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::new();
    if config.use_batch_norm {
        layers.push(ModelLayer::BatchNorm(BatchNorm::new(
            input_dims.iter().product(),
        )));
    }
    layers.push(ModelLayer::Tcl(TclLayer::random(
        input_dims, tcl_ranks, &mut rng,
    )?));
    if config.use_batch_norm {
        layers.push(ModelLayer::BatchNorm(BatchNorm::new(
            tcl_ranks.iter().product(),
        )));
    }
    layers.push(ModelLayer::Trl(TrlLayer::random(
        tcl_ranks, trl_ranks, output_dim, &mut rng,
    )?));
    Ok(Model::new(layers))
}
