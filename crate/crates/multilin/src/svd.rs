//! Thin SVD helper used by the decomposition code.
//!
//! Only left singular vectors are consumed. Columns are returned in
//! descending singular-value order with a deterministic sign convention:
//! the largest-magnitude entry of each vector is forced non-negative, so
//! repeated runs produce identical factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Top `rank` left singular vectors of `m`, as an `m.rows() x rank` matrix.
pub(crate) fn left_singular_vectors(m: &Matrix, rank: usize) -> Result<Matrix> {
    let (rows, cols) = (m.rows(), m.cols());
    let max_rank = rows.min(cols);
    if rank == 0 || rank > max_rank {
        return Err(Error::InvalidArgument(format!(
            "requested {rank} singular vectors from a {rows}x{cols} matrix"
        )));
    }
    let a = DMatrix::from_row_slice(rows, cols, m.data());
    let svd = a.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");

    // Explicit descending sort; ties broken by original column index.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut out = Matrix::zeros(rows, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        let mut col: Vec<f64> = (0..rows).map(|r| u[(r, src)]).collect();
        let (mut best, mut best_abs) = (0usize, 0.0f64);
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            for v in &mut col {
                *v = -*v;
            }
        }
        for (r, &v) in col.iter().enumerate() {
            out.set(r, dst, v);
        }
    }
    Ok(out)
}
