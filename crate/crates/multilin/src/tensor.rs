//! Dense tensor storage and the basic multilinear algebra: mode-n unfolding
//! and folding, vectorization, n-mode products, Kronecker products, and the
//! generalized inner product.
//!
//! Tensors are stored row-major: element `(i_0, ..., i_N)` of a tensor with
//! shape `(I_0, ..., I_N)` lives at flat offset `sum_k i_k * prod_{m>k} I_m`.
//! All index maps below (unfolding, vectorization) are stated against this
//! layout, which makes `vectorize` a zero-cost view and every unfolding a
//! strided copy.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A dense multidimensional array of `f64` with an explicit shape.
///
/// Values are immutable to library callers except through explicit parameter
/// updates in the training code; all algebra operations are pure functions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from a shape and a row-major data buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument("tensor order must be >= 1".into()));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dimension sizes must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} expects {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_elem(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// I.i.d. Gaussian entries with mean 0 and the given standard deviation.
    pub fn gaussian<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std.max(0.0)).expect("valid std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// I.i.d. uniform entries in `[lo, hi)`.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (k, (&i, &d)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(i < d, "index {i} out of bounds for mode {k} (dim {d})");
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) into {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// An order-2 [`DenseTensor`], aliased for clarity in matrix-shaped contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    inner: DenseTensor,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Ok(Self {
            inner: DenseTensor::new(vec![rows, cols], data)?,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DenseTensor::zeros(&[rows, cols]),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.inner.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_tensor(t: DenseTensor) -> Result<Self> {
        if t.order() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "matrix requires order 2, got shape {:?}",
                t.shape()
            )));
        }
        Ok(Self { inner: t })
    }

    pub fn gaussian<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        Self {
            inner: DenseTensor::gaussian(&[rows, cols], std, rng),
        }
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        Self {
            inner: DenseTensor::uniform(&[rows, cols], lo, hi, rng),
        }
    }

    pub fn rows(&self) -> usize {
        self.inner.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.inner.shape[1]
    }

    pub fn as_tensor(&self) -> &DenseTensor {
        &self.inner
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.inner
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.inner.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.inner.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.inner.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.inner.data[r * cols..(r + 1) * cols]
    }

    pub fn transpose(&self) -> Matrix {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Matrix::zeros(c, r);
        for i in 0..r {
            for j in 0..c {
                out.inner.data[j * r + i] = self.inner.data[i * c + j];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols() != other.rows() {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} * {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        let mut out = Matrix::zeros(self.rows(), other.cols());
        mm(
            self.data(),
            self.rows(),
            self.cols(),
            other.data(),
            other.cols(),
            out.data_mut(),
        );
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols() != other.cols() {
            return Err(Error::ShapeMismatch(format!(
                "matmul_nt {}x{} * ({}x{})^T",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        let mut out = Matrix::zeros(self.rows(), other.rows());
        mm_nt(
            self.data(),
            self.rows(),
            self.cols(),
            other.data(),
            other.rows(),
            out.data_mut(),
        );
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows() != other.rows() {
            return Err(Error::ShapeMismatch(format!(
                "matmul_tn ({}x{})^T * {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        let mut out = Matrix::zeros(self.cols(), other.cols());
        mm_tn(
            self.data(),
            self.rows(),
            self.cols(),
            other.data(),
            other.cols(),
            out.data_mut(),
        );
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn column_l2_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0; self.cols()];
        for r in 0..self.rows() {
            for (c, n) in norms.iter_mut().enumerate() {
                let v = self.get(r, c);
                *n += v * v;
            }
        }
        norms.iter().map(|n| n.sqrt()).collect()
    }

    pub fn scale_columns(&mut self, scales: &[f64]) {
        assert_eq!(scales.len(), self.cols());
        let cols = self.cols();
        for r in 0..self.rows() {
            for (c, &s) in scales.iter().enumerate() {
                self.inner.data[r * cols + c] *= s;
            }
        }
    }
}

// Raw row-major matrix kernels. `a` is m x k, output m x n, pre-zeroed.
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

// a is m x k, b is n x k; out = a * b^T, m x n.
fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(a_row, b_row);
        }
    }
}

// a is m x k, b is m x n; out = a^T * b, k x n.
fn mm_tn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for r in 0..m {
        let a_row = &a[r * k..(r + 1) * k];
        let b_row = &b[r * n..(r + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Mode-n unfolding: a matrix with `I_n` rows whose columns enumerate the
/// remaining indices in row-major order, i.e. element `(i_0, ..., i_N)` maps
/// to `(i_n, j)` with `j = sum_{k != n} i_k * prod_{m > k, m != n} I_m`.
pub fn unfold(x: &DenseTensor, n: usize) -> Result<Matrix> {
    let order = x.order();
    if n >= order {
        return Err(Error::ModeOutOfRange { mode: n, order });
    }
    let dim_n = x.shape[n];
    let prefix: usize = x.shape[..n].iter().product();
    let suffix: usize = x.shape[n + 1..].iter().product();
    let cols = prefix * suffix;
    let mut m = Matrix::zeros(dim_n, cols);
    for p in 0..prefix {
        for i in 0..dim_n {
            let src = (p * dim_n + i) * suffix;
            let dst = i * cols + p * suffix;
            m.data_mut()[dst..dst + suffix].copy_from_slice(&x.data[src..src + suffix]);
        }
    }
    Ok(m)
}

/// Inverse of [`unfold`]: scatters the matrix back into a tensor of the
/// given shape so that `unfold(fold(m, n, shape), n) == m` bit-exactly.
pub fn fold(m: &Matrix, n: usize, shape: &[usize]) -> Result<DenseTensor> {
    let order = shape.len();
    if n >= order {
        return Err(Error::ModeOutOfRange { mode: n, order });
    }
    let dim_n = shape[n];
    let prefix: usize = shape[..n].iter().product();
    let suffix: usize = shape[n + 1..].iter().product();
    if m.rows() != dim_n || m.cols() != prefix * suffix {
        return Err(Error::ShapeMismatch(format!(
            "cannot fold {}x{} matrix into {shape:?} at mode {n} (need {}x{})",
            m.rows(),
            m.cols(),
            dim_n,
            prefix * suffix
        )));
    }
    let mut x = DenseTensor::zeros(shape);
    let cols = m.cols();
    for p in 0..prefix {
        for i in 0..dim_n {
            let dst = (p * dim_n + i) * suffix;
            let src = i * cols + p * suffix;
            x.data[dst..dst + suffix].copy_from_slice(&m.data()[src..src + suffix]);
        }
    }
    Ok(x)
}

/// Row-major flattening: element `(i_0, ..., i_N)` maps to position
/// `j = sum_k i_k * prod_{m > k} I_m`, which is the identity on the buffer.
pub fn vectorize(x: &DenseTensor) -> &[f64] {
    x.data()
}

/// n-mode product `x ×_n m`: contracts mode `n` of `x` (size `I_n`) with the
/// columns of `m` (shape `R x I_n`), yielding shape
/// `(I_0, ..., I_{n-1}, R, I_{n+1}, ..., I_N)`.
///
/// Equals `fold(m * unfold(x, n), n, new_shape)`; computed in place without
/// materializing the unfolding.
pub fn n_mode_product(x: &DenseTensor, m: &Matrix, n: usize) -> Result<DenseTensor> {
    let order = x.order();
    if n >= order {
        return Err(Error::ModeOutOfRange { mode: n, order });
    }
    let dim_n = x.shape[n];
    if m.cols() != dim_n {
        return Err(Error::ShapeMismatch(format!(
            "n-mode product at mode {n}: matrix has {} columns, tensor dim is {dim_n}",
            m.cols()
        )));
    }
    let r = m.rows();
    let prefix: usize = x.shape[..n].iter().product();
    let suffix: usize = x.shape[n + 1..].iter().product();
    let mut new_shape = x.shape.clone();
    new_shape[n] = r;
    let mut out = DenseTensor::zeros(&new_shape);

    if n == 0 {
        // (R x I_0) * (I_0 x suffix)
        mm(m.data(), r, dim_n, &x.data, suffix, &mut out.data);
    } else if suffix == 1 {
        // Last mode: rows of the (prefix x I_n) view dotted with rows of m.
        mm_nt(&x.data, prefix, dim_n, m.data(), r, &mut out.data);
    } else {
        // Middle mode: accumulate axpy over the contiguous suffix block.
        for p in 0..prefix {
            let x_base = p * dim_n * suffix;
            let o_base = p * r * suffix;
            for i in 0..dim_n {
                let src = &x.data[x_base + i * suffix..x_base + (i + 1) * suffix];
                for q in 0..r {
                    let w = m.get(q, i);
                    if w == 0.0 {
                        continue;
                    }
                    let dst = &mut out.data[o_base + q * suffix..o_base + (q + 1) * suffix];
                    for (o, &s) in dst.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of two matrices.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = (a.rows(), a.cols());
    let (rb, cb) = (b.rows(), b.cols());
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    let cols = ca * cb;
    for ia in 0..ra {
        for ja in 0..ca {
            let av = a.get(ia, ja);
            if av == 0.0 {
                continue;
            }
            for ib in 0..rb {
                let dst_row = (ia * rb + ib) * cols + ja * cb;
                let src_row = b.row(ib);
                for (jb, &bv) in src_row.iter().enumerate() {
                    out.inner.data[dst_row + jb] = av * bv;
                }
            }
        }
    }
    out
}

/// Generalized inner product contracting the last `n_shared` modes of `x`
/// with the first `n_shared` modes of `y`.
///
/// `x` must have shape `(D_x, S_1, ..., S_n)` and `y` shape
/// `(S_1, ..., S_n, D_y)`; the result is the `D_x x D_y` matrix with entry
/// `(a, b) = sum over shared indices of x[a, ...] * y[..., b]`. This equals
/// the mode-0 unfolding of `x` times the transposed last-mode unfolding of
/// `y`, which for row-major storage are both plain reshapes.
pub fn generalized_inner_product(
    x: &DenseTensor,
    y: &DenseTensor,
    n_shared: usize,
) -> Result<Matrix> {
    if x.order() != n_shared + 1 || y.order() != n_shared + 1 {
        return Err(Error::ShapeMismatch(format!(
            "generalized inner product over {n_shared} shared modes needs order-{} operands, got {} and {}",
            n_shared + 1,
            x.order(),
            y.order()
        )));
    }
    let shared_x = &x.shape[1..];
    let shared_y = &y.shape[..n_shared];
    if shared_x != shared_y {
        return Err(Error::ShapeMismatch(format!(
            "shared modes differ: {shared_x:?} vs {shared_y:?}"
        )));
    }
    let d_x = x.shape[0];
    let d_y = y.shape[n_shared];
    let p: usize = shared_x.iter().product();
    let mut out = Matrix::zeros(d_x, d_y);
    mm(&x.data, d_x, p, &y.data, d_y, out.data_mut());
    Ok(out)
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

    /// Independent oracle for the unfolding index map: places every element
    /// via `j = sum_{k != n} i_k * prod_{m > k, m != n} I_m` one at a time.
    fn oracle_unfold(x: &DenseTensor, n: usize) -> Matrix {
        let shape = x.shape();
        let cols: usize = shape
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != n)
            .map(|(_, &d)| d)
            .product();
        let mut m = Matrix::zeros(shape[n], cols);
        let mut idx = vec![0usize; shape.len()];
        loop {
            let mut j = 0usize;
            for k in 0..shape.len() {
                if k == n {
                    continue;
                }
                let stride: usize = shape
                    .iter()
                    .enumerate()
                    .skip(k + 1)
                    .filter(|&(mm, _)| mm != n)
                    .map(|(_, &d)| d)
                    .product();
                j += idx[k] * stride;
            }
            m.set(idx[n], j, x.get(&idx));
            let mut k = shape.len();
            loop {
                if k == 0 {
                    return m;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Exhaustive-loop oracle for the generalized inner product.
    fn oracle_gen_inner(x: &DenseTensor, y: &DenseTensor, n_shared: usize) -> Matrix {
        let d_x = x.shape()[0];
        let d_y = y.shape()[n_shared];
        let shared: Vec<usize> = x.shape()[1..].to_vec();
        let mut out = Matrix::zeros(d_x, d_y);
        let mut idx = vec![0usize; n_shared];
        let total: usize = shared.iter().product();
        let mut xi = vec![0usize; n_shared + 1];
        let mut yi = vec![0usize; n_shared + 1];
        for _ in 0..total {
            for a in 0..d_x {
                for b in 0..d_y {
                    xi[0] = a;
                    xi[1..].copy_from_slice(&idx);
                    yi[..n_shared].copy_from_slice(&idx);
                    yi[n_shared] = b;
                    let v = out.get(a, b) + x.get(&xi) * y.get(&yi);
                    out.set(a, b, v);
                }
            }
            for k in (0..n_shared).rev() {
                idx[k] += 1;
                if idx[k] < shared[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::gaussian(shape, 1.0, rng)
    }

    #[test]
    fn new_rejects_bad_lengths() {
        assert!(DenseTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn unfold_mode0_of_matrix_is_identity() {
        let x = DenseTensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let m = unfold(&x, 0).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.data(), x.data());
    }

    #[test]
    fn unfold_2x2x2_mode1_matches_derived_rows() {
        let x = DenseTensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let m = unfold(&x, 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 4));
        assert_eq!(m.row(0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(m.row(1), &[2.0, 3.0, 6.0, 7.0]);
        // Same values from the element-by-element index-map oracle.
        let oracle = oracle_unfold(&x, 1);
        assert_eq!(m.data(), oracle.data());
    }

    #[test]
    fn unfold_matches_oracle_on_random_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shape in [vec![3, 4, 5], vec![2, 3, 2, 4], vec![6, 2]] {
            let x = random_tensor(&shape, &mut rng);
            for n in 0..shape.len() {
                let m = unfold(&x, n).unwrap();
                let o = oracle_unfold(&x, n);
                assert_eq!(m.data(), o.data(), "mode {n} of {shape:?}");
            }
        }
    }

    #[test]
    fn unfold_rejects_mode_out_of_range() {
        let x = DenseTensor::zeros(&[2, 2]);
        assert!(matches!(
            unfold(&x, 2),
            Err(Error::ModeOutOfRange { mode: 2, order: 2 })
        ));
    }

    #[test]
    fn fold_inverts_the_mode1_unfold_example() {
        let m = Matrix::new(2, 4, vec![0.0, 1.0, 4.0, 5.0, 2.0, 3.0, 6.0, 7.0]).unwrap();
        let x = fold(&m, 1, &[2, 2, 2]).unwrap();
        assert_eq!(x.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn fold_unfold_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&[3, 4, 5], &mut rng);
        for n in 0..3 {
            let back = fold(&unfold(&x, n).unwrap(), n, x.shape()).unwrap();
            assert_eq!(back.data(), x.data());
        }
    }

    #[test]
    fn fold_rejects_mismatched_columns() {
        let m = Matrix::zeros(2, 5);
        assert!(fold(&m, 1, &[2, 2, 2]).is_err());
    }

    #[test]
    fn vectorize_is_row_major_flatten() {
        let x = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(vectorize(&x), &[1.0, 2.0, 3.0, 4.0]);
        let v = DenseTensor::new(vec![3], vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(vectorize(&v), v.data());
        let t = DenseTensor::zeros(&[2, 3, 4]);
        assert_eq!(vectorize(&t).len(), 24);
    }

    #[test]
    fn vectorize_agrees_with_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = [2, 3, 4];
        let x = random_tensor(&shape, &mut rng);
        let v = vectorize(&x);
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..4 {
                    let j = i0 * 12 + i1 * 4 + i2;
                    assert_eq!(v[j], x.get(&[i0, i1, i2]));
                }
            }
        }
    }

    #[test]
    fn n_mode_product_with_identity_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&[3, 4, 2], &mut rng);
        for n in 0..3 {
            let id = Matrix::identity(x.shape()[n]);
            let y = n_mode_product(&x, &id, n).unwrap();
            assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn n_mode_product_row_sum_example() {
        let x = DenseTensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let m = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let y = n_mode_product(&x, &m, 1).unwrap();
        assert_eq!(y.shape(), &[2, 1, 2]);
        let yu = unfold(&y, 1).unwrap();
        assert_eq!(yu.row(0), &[2.0, 4.0, 10.0, 12.0]);
    }

    #[test]
    fn n_mode_product_shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&[3, 4, 5], &mut rng);
        let m = Matrix::gaussian(7, 5, 1.0, &mut rng);
        let y = n_mode_product(&x, &m, 2).unwrap();
        assert_eq!(y.shape(), &[3, 4, 7]);
        // Must agree with the fold(m * unfold(x, n)) route.
        let via_unfold = fold(&m.matmul(&unfold(&x, 2).unwrap()).unwrap(), 2, &[3, 4, 7]).unwrap();
        assert!(max_abs_diff(y.data(), via_unfold.data()) < 1e-12);
    }

    #[test]
    fn n_mode_product_rejects_dim_mismatch() {
        let x = DenseTensor::zeros(&[3, 4]);
        let m = Matrix::zeros(2, 5);
        assert!(n_mode_product(&x, &m, 1).is_err());
    }

    #[test]
    fn n_mode_products_commute_on_distinct_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_tensor(&[3, 4, 5], &mut rng);
        let a = Matrix::gaussian(2, 3, 1.0, &mut rng);
        let b = Matrix::gaussian(6, 5, 1.0, &mut rng);
        let xy = n_mode_product(&n_mode_product(&x, &a, 0).unwrap(), &b, 2).unwrap();
        let yx = n_mode_product(&n_mode_product(&x, &b, 2).unwrap(), &a, 0).unwrap();
        assert!(max_abs_diff(xy.data(), yx.data()) < 1e-12);
    }

    #[test]
    fn same_mode_products_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_tensor(&[3, 4, 5], &mut rng);
        let a = Matrix::gaussian(6, 4, 1.0, &mut rng);
        let b = Matrix::gaussian(2, 6, 1.0, &mut rng);
        let seq = n_mode_product(&n_mode_product(&x, &a, 1).unwrap(), &b, 1).unwrap();
        let ba = b.matmul(&a).unwrap();
        let once = n_mode_product(&x, &ba, 1).unwrap();
        assert!(max_abs_diff(seq.data(), once.data()) < 1e-12);
    }

    #[test]
    fn kronecker_of_identities() {
        let k = kronecker(&Matrix::identity(2), &Matrix::identity(3));
        assert_eq!(k.data(), Matrix::identity(6).data());
    }

    #[test]
    fn kronecker_hand_expanded() {
        let a = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Matrix::new(2, 1, vec![3.0, 4.0]).unwrap();
        let k = kronecker(&a, &b);
        assert_eq!((k.rows(), k.cols()), (2, 2));
        assert_eq!(k.data(), &[3.0, 6.0, 4.0, 8.0]);
    }

    #[test]
    fn kronecker_shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = Matrix::gaussian(3, 5, 1.0, &mut rng);
        let b = Matrix::gaussian(2, 4, 1.0, &mut rng);
        let k = kronecker(&a, &b);
        assert_eq!((k.rows(), k.cols()), (6, 20));
        assert!((k.get(5, 19) - a.get(2, 4) * b.get(1, 3)).abs() < 1e-15);
    }

    #[test]
    fn full_inner_product_reduces_to_scalar_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let core = random_tensor(&[2, 3], &mut rng);
        let x = core.clone().reshaped(vec![1, 2, 3]).unwrap();
        let y = core.clone().reshaped(vec![2, 3, 1]).unwrap();
        let m = generalized_inner_product(&x, &y, 2).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        let expected: f64 = core.data().iter().map(|v| v * v).sum();
        assert!((m.get(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn gen_inner_matrix_case_is_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = random_tensor(&[2, 3], &mut rng);
        let y = random_tensor(&[3, 2], &mut rng);
        let g = generalized_inner_product(&x, &y, 1).unwrap();
        let mx = Matrix::from_tensor(x).unwrap();
        let my = Matrix::from_tensor(y).unwrap();
        let mm = mx.matmul(&my).unwrap();
        assert!(max_abs_diff(g.data(), mm.data()) < 1e-12);
    }

    #[test]
    fn gen_inner_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_tensor(&[4, 2, 3], &mut rng);
        let y = random_tensor(&[2, 3, 5], &mut rng);
        let fast = generalized_inner_product(&x, &y, 2).unwrap();
        let slow = oracle_gen_inner(&x, &y, 2);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            let denom = a.abs().max(b.abs()).max(1e-30);
            assert!((a - b).abs() / denom < 1e-10);
        }
    }

    #[test]
    fn gen_inner_rejects_shared_mismatch() {
        let x = DenseTensor::zeros(&[4, 2, 3]);
        let y = DenseTensor::zeros(&[3, 2, 5]);
        assert!(generalized_inner_product(&x, &y, 2).is_err());
        let z = DenseTensor::zeros(&[2, 3]);
        assert!(generalized_inner_product(&x, &z, 2).is_err());
    }

    #[test]
    fn transpose_and_matmul_variants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let a = Matrix::gaussian(4, 3, 1.0, &mut rng);
        let b = Matrix::gaussian(3, 5, 1.0, &mut rng);
        let ab = a.matmul(&b).unwrap();
        let nt = a.matmul_nt(&b.transpose()).unwrap();
        let tn = a.transpose().matmul_tn(&b).unwrap();
        assert!(max_abs_diff(ab.data(), nt.data()) < 1e-12);
        assert!(max_abs_diff(ab.data(), tn.data()) < 1e-12);
    }
}
