//! Tucker decomposition: HOSVD initialization, HOOI alternating refinement,
//! and partial decompositions that leave a subset of modes unprojected.
//!
//! A Tucker representation stores a core tensor of shape `(R_0, ..., R_N)`
//! and one `I_k x R_k` factor per projected mode; reconstruction multiplies
//! the core by every factor along its mode. Factor updates use the closed
//! form per mode (top left singular vectors of the partially projected
//! unfolding), and the core is the full projection of the input by the
//! factor transposes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd::left_singular_vectors;
use crate::tensor::{n_mode_product, unfold, DenseTensor, Matrix};

/// A tensor in Tucker form: core plus per-mode factors.
///
/// Modes listed in `skipped_modes` carry no factor (identity projection);
/// `factors` holds the remaining modes' factors in ascending mode order.
#[derive(Debug, Clone)]
pub struct TuckerTensor {
    core: DenseTensor,
    factors: Vec<Matrix>,
    skipped_modes: BTreeSet<usize>,
}

impl TuckerTensor {
    /// Full Tucker form: one factor per core mode.
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        Self::with_skipped(core, factors, BTreeSet::new())
    }

    /// Tucker form where `skipped_modes` keep their original dimension.
    pub fn with_skipped(
        core: DenseTensor,
        factors: Vec<Matrix>,
        skipped_modes: BTreeSet<usize>,
    ) -> Result<Self> {
        let order = core.order();
        if let Some(&m) = skipped_modes.iter().find(|&&m| m >= order) {
            return Err(Error::ModeOutOfRange { mode: m, order });
        }
        let projected = order - skipped_modes.len();
        if factors.len() != projected {
            return Err(Error::ShapeMismatch(format!(
                "expected {projected} factors for an order-{order} core with {} skipped modes, got {}",
                skipped_modes.len(),
                factors.len()
            )));
        }
        let mut fi = 0;
        for (mode, &dim) in core.shape().iter().enumerate() {
            if skipped_modes.contains(&mode) {
                continue;
            }
            let f = &factors[fi];
            if f.cols() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "factor for mode {mode} has {} columns, core dimension is {dim}",
                    f.cols()
                )));
            }
            fi += 1;
        }
        Ok(Self {
            core,
            factors,
            skipped_modes,
        })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn skipped_modes(&self) -> &BTreeSet<usize> {
        &self.skipped_modes
    }

    /// The factor attached to `mode`, or `None` for a skipped mode.
    pub fn factor_for_mode(&self, mode: usize) -> Option<&Matrix> {
        if self.skipped_modes.contains(&mode) {
            return None;
        }
        let pos = (0..mode)
            .filter(|m| !self.skipped_modes.contains(m))
            .count();
        self.factors.get(pos)
    }

    /// Shape of the reconstructed tensor.
    pub fn original_shape(&self) -> Vec<usize> {
        self.core
            .shape()
            .iter()
            .enumerate()
            .map(|(mode, &dim)| match self.factor_for_mode(mode) {
                Some(f) => f.rows(),
                None => dim,
            })
            .collect()
    }
}

/// Convergence record of an alternating decomposition run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompReport {
    /// Number of completed HOOI sweeps.
    pub iterations: usize,
    /// Relative Frobenius reconstruction error after each sweep; non-increasing.
    pub rel_error_history: Vec<f64>,
}

impl DecompReport {
    pub fn final_rel_error(&self) -> f64 {
        self.rel_error_history.last().copied().unwrap_or(0.0)
    }
}

/// Multiplies the core by every factor along its mode.
pub fn tucker_reconstruct(t: &TuckerTensor) -> Result<DenseTensor> {
    let mut x = t.core.clone();
    for mode in 0..t.core.order() {
        if let Some(f) = t.factor_for_mode(mode) {
            x = n_mode_product(&x, f, mode)?;
        }
    }
    Ok(x)
}

fn validate_modes_and_ranks(
    shape: &[usize],
    modes: &[usize],
    ranks: &[usize],
) -> Result<()> {
    if modes.len() != ranks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} modes but {} ranks",
            modes.len(),
            ranks.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for (&mode, &rank) in modes.iter().zip(ranks) {
        if mode >= shape.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: shape.len(),
            });
        }
        if !seen.insert(mode) {
            return Err(Error::InvalidArgument(format!("duplicate mode {mode}")));
        }
        if rank == 0 || rank > shape[mode] {
            return Err(Error::RankTooLarge {
                mode,
                rank,
                dim: shape[mode],
            });
        }
    }
    Ok(())
}

// Projects x by the transpose of every listed factor along its mode.
fn project(x: &DenseTensor, modes: &[usize], factors: &[Matrix]) -> Result<DenseTensor> {
    let mut y = x.clone();
    for (&mode, f) in modes.iter().zip(factors) {
        y = n_mode_product(&y, &f.transpose(), mode)?;
    }
    Ok(y)
}

fn rel_error(x: &DenseTensor, recon: &DenseTensor, norm_x: f64) -> f64 {
    if norm_x == 0.0 {
        return 0.0;
    }
    x.sub(recon).expect("same shape").frobenius_norm() / norm_x
}

fn make_tucker(
    shape: &[usize],
    modes: &[usize],
    core: DenseTensor,
    factors: Vec<Matrix>,
) -> Result<TuckerTensor> {
    let chosen: BTreeSet<usize> = modes.iter().copied().collect();
    let skipped: BTreeSet<usize> = (0..shape.len()).filter(|m| !chosen.contains(m)).collect();
    // `modes` is ascending by construction of the public entry points.
    TuckerTensor::with_skipped(core, factors, skipped)
}

/// Higher-order SVD on the given modes: factor `k` is the top-`ranks[k]`
/// left singular vectors of the mode-`k` unfolding, and the core is the
/// input projected by every factor transpose.
pub fn partial_hosvd(x: &DenseTensor, modes: &[usize], ranks: &[usize]) -> Result<TuckerTensor> {
    let mut modes = modes.to_vec();
    let mut ranks_sorted = ranks.to_vec();
    sort_pairs(&mut modes, &mut ranks_sorted);
    validate_modes_and_ranks(x.shape(), &modes, &ranks_sorted)?;
    let mut factors = Vec::with_capacity(modes.len());
    for (&mode, &rank) in modes.iter().zip(&ranks_sorted) {
        factors.push(left_singular_vectors(&unfold(x, mode)?, rank)?);
    }
    let core = project(x, &modes, &factors)?;
    make_tucker(x.shape(), &modes, core, factors)
}

/// HOSVD over all modes.
pub fn hosvd(x: &DenseTensor, ranks: &[usize]) -> Result<TuckerTensor> {
    let modes: Vec<usize> = (0..x.order()).collect();
    if ranks.len() != modes.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} ranks for an order-{} tensor, got {}",
            modes.len(),
            modes.len(),
            ranks.len()
        )));
    }
    partial_hosvd(x, &modes, ranks)
}

/// Higher-order orthogonal iteration over a subset of modes.
///
/// Starts from the partial HOSVD, then sweeps: for each chosen mode `n`,
/// the factor becomes the top left singular vectors of the unfolding of the
/// input projected by every *other* chosen factor transpose. Stops when the
/// relative-error improvement drops below `tol` or after `max_iter` sweeps.
pub fn partial_tucker(
    x: &DenseTensor,
    modes: &[usize],
    ranks: &[usize],
    max_iter: usize,
    tol: f64,
) -> Result<(TuckerTensor, DecompReport)> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let mut modes = modes.to_vec();
    let mut ranks = ranks.to_vec();
    sort_pairs(&mut modes, &mut ranks);
    validate_modes_and_ranks(x.shape(), &modes, &ranks)?;

    let init = partial_hosvd(x, &modes, &ranks)?;
    let norm_x = x.frobenius_norm();
    let mut factors = init.factors.clone();
    let mut core = init.core;
    let mut prev_err = rel_error(x, &tucker_reconstruct(&make_tucker(x.shape(), &modes, core.clone(), factors.clone())?)?, norm_x);

    let mut history = Vec::new();
    for _ in 0..max_iter {
        let prev_factors = factors.clone();
        let prev_core = core.clone();
        for (i, &mode) in modes.iter().enumerate() {
            let other_modes: Vec<usize> = modes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &m)| m)
                .collect();
            let other_factors: Vec<Matrix> = factors
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, f)| f.clone())
                .collect();
            let projected = project(x, &other_modes, &other_factors)?;
            factors[i] = left_singular_vectors(&unfold(&projected, mode)?, ranks[i])?;
        }
        core = project(x, &modes, &factors)?;
        let t = make_tucker(x.shape(), &modes, core.clone(), factors.clone())?;
        let err = rel_error(x, &tucker_reconstruct(&t)?, norm_x);
        if err > prev_err {
            // Floating-point jitter at convergence; keep the better state.
            factors = prev_factors;
            core = prev_core;
            break;
        }
        history.push(err);
        let improved = prev_err - err;
        prev_err = err;
        if improved < tol {
            break;
        }
    }
    if history.is_empty() {
        history.push(prev_err);
    }
    let report = DecompReport {
        iterations: history.len(),
        rel_error_history: history,
    };
    Ok((
        make_tucker(x.shape(), &modes, core, factors)?,
        report,
    ))
}

/// HOOI over all modes. Defaults elsewhere: `max_iter = 50`, `tol = 1e-8`.
pub fn hooi(
    x: &DenseTensor,
    ranks: &[usize],
    max_iter: usize,
    tol: f64,
) -> Result<(TuckerTensor, DecompReport)> {
    let modes: Vec<usize> = (0..x.order()).collect();
    if ranks.len() != modes.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} ranks for an order-{} tensor, got {}",
            modes.len(),
            modes.len(),
            ranks.len()
        )));
    }
    partial_tucker(x, &modes, ranks, max_iter, tol)
}

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-8;

fn sort_pairs(modes: &mut [usize], ranks: &mut [usize]) {
    let mut idx: Vec<usize> = (0..modes.len()).collect();
    idx.sort_by_key(|&i| modes[i]);
    let m: Vec<usize> = idx.iter().map(|&i| modes[i]).collect();
    let r: Vec<usize> = idx.iter().map(|&i| ranks[i]).collect();
    modes.copy_from_slice(&m);
    ranks.copy_from_slice(&r);
}
