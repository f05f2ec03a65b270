//! Dense multi-index arrays and the small linear-algebra kernels the rest of
//! the crate is built on: pairwise contraction, QR/LQ bond factorization,
//! truncated SVD and matrix-exponential action.
//!
//! Data is stored row-major: the last index runs fastest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Matrices up to this dimension are exponentiated by dense eigendecomposition.
pub const DENSE_EXPM_MAX_DIM: usize = 8;
/// Largest Krylov subspace built before falling back to the dense route.
pub const KRYLOV_MAX_DIM: usize = 16;
pub const KRYLOV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension");
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![ZERO; len],
        }
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    /// Row-major `rows × cols` matrix from real entries.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            vec![rows, cols],
            values.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    pub fn vector(values: Vec<C64>) -> Self {
        let n = values.len();
        Self {
            shape: vec![n],
            data: values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut strides = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        strides
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (k, (&i, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(i < d, "index {i} out of range on axis {k} (dim {d})");
            off = off * d + i;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: C64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Reorders axes so that output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if axes.len() != r {
            return Err(Error::Shape(format!("permutation {axes:?} for rank {r}")));
        }
        for &a in axes {
            if a >= r || seen[a] {
                return Err(Error::Shape(format!("invalid permutation {axes:?}")));
            }
            seen[a] = true;
        }
        if axes.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let old_strides = Self::strides(&self.shape);
        let src_strides: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut index = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            // odometer increment over the new index order
            for k in (0..r).rev() {
                index[k] += 1;
                src += src_strides[k];
                if index[k] < new_shape[k] {
                    break;
                }
                src -= src_strides[k] * new_shape[k];
                index[k] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale_mut(&mut self, factor: C64) {
        self.data.iter_mut().for_each(|z| *z *= factor);
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.scale_mut(factor);
        out
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Interprets the tensor as a matrix with rows spanning axes `..split`.
    pub fn matrix_dims(&self, split: usize) -> Result<(usize, usize)> {
        if split > self.rank() {
            return Err(Error::Shape(format!(
                "split point {split} beyond rank {}",
                self.rank()
            )));
        }
        let rows = self.shape[..split].iter().product();
        let cols = self.shape[split..].iter().product();
        Ok((rows, cols))
    }

    pub fn to_matrix(&self, split: usize) -> Result<DMatrix<C64>> {
        let (rows, cols) = self.matrix_dims(split)?;
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    /// Square-matrix view used by the exponential and the dense oracles.
    pub fn as_square(&self) -> Result<DMatrix<C64>> {
        match self.shape.as_slice() {
            [r, c] if r == c => self.to_matrix(1),
            s => Err(Error::Shape(format!("expected a square matrix, got {s:?}"))),
        }
    }

    pub fn dagger(&self) -> Result<Self> {
        match self.shape.as_slice() {
            [_, _] => Ok(self.permute(&[1, 0])?.conj()),
            s => Err(Error::Shape(format!("dagger needs a matrix, got {s:?}"))),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, other, &[(1, 0)])
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        let (a, b) = match (self.shape.as_slice(), other.shape.as_slice()) {
            ([r1, c1], [r2, c2]) => ((*r1, *c1), (*r2, *c2)),
            _ => return Err(Error::Shape("kron needs two matrices".into())),
        };
        let mut out = Self::zeros(vec![a.0 * b.0, a.1 * b.1]);
        let cols = a.1 * b.1;
        for i1 in 0..a.0 {
            for j1 in 0..a.1 {
                let x = self.data[i1 * a.1 + j1];
                if x == ZERO {
                    continue;
                }
                for i2 in 0..b.0 {
                    for j2 in 0..b.1 {
                        out.data[(i1 * b.0 + i2) * cols + j1 * b.1 + j2] =
                            x * other.data[i2 * b.1 + j2];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        match self.shape.as_slice() {
            [r, c] if r == c => {
                let n = *r;
                (0..n).all(|i| {
                    (i..n).all(|j| (self.data[i * n + j] - self.data[j * n + i].conj()).norm() <= tol)
                })
            }
            _ => false,
        }
    }
}

/// Contracts `a` with `b` over the listed `(axis_of_a, axis_of_b)` pairs.
///
/// The result carries the free axes of `a` followed by the free axes of `b`,
/// each group in its original order.
pub fn contract(a: &DenseTensor, b: &DenseTensor, paired_axes: &[(usize, usize)]) -> Result<DenseTensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(ia, ib) in paired_axes {
        if ia >= a.rank() || ib >= b.rank() || used_a[ia] || used_b[ib] {
            return Err(Error::Shape(format!(
                "invalid axis pair ({ia}, {ib}) for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        used_a[ia] = true;
        used_b[ib] = true;
        if a.shape[ia] != b.shape[ib] {
            return Err(Error::DimensionMismatch {
                axis_a: ia,
                axis_b: ib,
                dim_a: a.shape[ia],
                dim_b: b.shape[ib],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&k| !used_a[k]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&k| !used_b[k]).collect();

    let perm_a: Vec<usize> = free_a
        .iter()
        .copied()
        .chain(paired_axes.iter().map(|p| p.0))
        .collect();
    let perm_b: Vec<usize> = paired_axes
        .iter()
        .map(|p| p.1)
        .chain(free_b.iter().copied())
        .collect();
    let ap = a.permute(&perm_a)?;
    let bp = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&k| a.shape[k]).product();
    let n: usize = free_b.iter().map(|&k| b.shape[k]).product();
    let inner: usize = paired_axes.iter().map(|p| a.shape[p.0]).product();

    let mut data = vec![ZERO; m * n];
    for i in 0..m {
        let row = &ap.data[i * inner..(i + 1) * inner];
        let out = &mut data[i * n..(i + 1) * n];
        for (k, &x) in row.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let brow = &bp.data[k * n..(k + 1) * n];
            for (o, &y) in out.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&k| a.shape[k])
        .chain(free_b.iter().map(|&k| b.shape[k]))
        .collect();
    DenseTensor::new(shape, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// QR: the first factor is a left isometry.
    Left,
    /// LQ: the second factor is a right isometry.
    Right,
}

/// Splits `t` across `split_point` into two factors joined by a new bond.
///
/// `Left` yields `(Q, R)` with `Q†Q = I`; `Right` yields `(L, Q)` with `QQ† = I`.
/// The new bond has dimension `min(rows, cols)`.
pub fn factorize_bond(
    t: &DenseTensor,
    split_point: usize,
    direction: Direction,
) -> Result<(DenseTensor, DenseTensor)> {
    if split_point == 0 || split_point >= t.rank() {
        return Err(Error::Shape(format!(
            "split point {split_point} must lie strictly inside rank {}",
            t.rank()
        )));
    }
    let m = t.to_matrix(split_point)?;
    let (first, second) = match direction {
        Direction::Left => {
            let qr = m.qr();
            (qr.q(), qr.r())
        }
        Direction::Right => {
            let qr = m.adjoint().qr();
            (qr.r().adjoint(), qr.q().adjoint())
        }
    };
    let k = first.ncols();
    let mut left_shape = t.shape[..split_point].to_vec();
    left_shape.push(k);
    let mut right_shape = vec![k];
    right_shape.extend_from_slice(&t.shape[split_point..]);
    Ok((
        DenseTensor::from_matrix(&first).reshape(left_shape)?,
        DenseTensor::from_matrix(&second).reshape(right_shape)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdSplit {
    pub left_isometry: DenseTensor,
    pub singular_values: Vec<f64>,
    pub right_isometry: DenseTensor,
    pub discarded_weight: f64,
}

impl SvdSplit {
    pub fn bond_dim(&self) -> usize {
        self.singular_values.len()
    }

    /// `U·diag(S)` with the singular values absorbed to the left.
    pub fn left_weighted(&self) -> DenseTensor {
        let mut u = self.left_isometry.clone();
        let k = self.bond_dim();
        for (idx, z) in u.data.iter_mut().enumerate() {
            *z *= self.singular_values[idx % k];
        }
        u
    }

    /// `diag(S)·V†` with the singular values absorbed to the right.
    pub fn right_weighted(&self) -> DenseTensor {
        let mut v = self.right_isometry.clone();
        let k = self.bond_dim();
        let stride = v.len() / k;
        for (idx, z) in v.data.iter_mut().enumerate() {
            *z *= self.singular_values[idx / stride];
        }
        v
    }
}

/// Thin SVD across `split_point`, keeping
/// `min(chi_max, #{σ_i > threshold·σ_1}, rank)` singular values and never
/// fewer than one.
pub fn svd_truncate(
    t: &DenseTensor,
    split_point: usize,
    chi_max: usize,
    threshold: f64,
) -> Result<SvdSplit> {
    if chi_max == 0 {
        return Err(Error::InvalidArgument("chi_max must be at least 1".into()));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} must be >= 0")));
    }
    if split_point == 0 || split_point >= t.rank() {
        return Err(Error::Shape(format!(
            "split point {split_point} must lie strictly inside rank {}",
            t.rank()
        )));
    }
    let m = t.to_matrix(split_point)?;
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    // stable: ties keep their stored order
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));

    let largest = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    let above = order
        .iter()
        .filter(|&&i| sv[i] > threshold * largest && sv[i] > 0.0)
        .count();
    let keep = chi_max.min(above).max(1);

    let rows = u.nrows();
    let cols = v_t.ncols();
    let mut left = Vec::with_capacity(rows * keep);
    for r in 0..rows {
        for &i in &order[..keep] {
            left.push(u[(r, i)]);
        }
    }
    let mut right = Vec::with_capacity(keep * cols);
    for &i in &order[..keep] {
        for c in 0..cols {
            right.push(v_t[(i, c)]);
        }
    }
    let singular_values: Vec<f64> = order[..keep].iter().map(|&i| sv[i]).collect();
    let discarded_weight = order[keep..].iter().map(|&i| sv[i] * sv[i]).sum();

    let mut left_shape = t.shape[..split_point].to_vec();
    left_shape.push(keep);
    let mut right_shape = vec![keep];
    right_shape.extend_from_slice(&t.shape[split_point..]);
    Ok(SvdSplit {
        left_isometry: DenseTensor::new(left_shape, left)?,
        singular_values,
        right_isometry: DenseTensor::new(right_shape, right)?,
        discarded_weight,
    })
}

fn hermitian_tol(m: &DMatrix<C64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    1e-12 * scale
}

pub(crate) fn is_hermitian_matrix(m: &DMatrix<C64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let tol = hermitian_tol(m);
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= tol))
}

/// `exp(scale·h)` as a dense matrix. Hermitian generators go through an
/// eigendecomposition, everything else through Padé scaling and squaring.
pub fn expm_dense(h: &DMatrix<C64>, scale: C64) -> DMatrix<C64> {
    if is_hermitian_matrix(h) {
        let eig = SymmetricEigen::new(h.clone());
        let v = &eig.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let f = (scale * lambda).exp();
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= f;
            }
        }
        scaled * v.adjoint()
    } else {
        (h * scale).exp()
    }
}

fn dense_apply(h: &DMatrix<C64>, v: &DVector<C64>, scale: C64) -> DVector<C64> {
    if is_hermitian_matrix(h) {
        let eig = SymmetricEigen::new(h.clone());
        let vecs = &eig.eigenvectors;
        let mut coeffs = vecs.adjoint() * v;
        for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
            *c *= (scale * lambda).exp();
        }
        vecs * coeffs
    } else {
        (h * scale).exp() * v
    }
}

/// Lanczos approximation of `exp(scale·h)·v` for Hermitian `h`.
/// Returns `None` when the residual estimate does not reach [`KRYLOV_TOL`]
/// within [`KRYLOV_MAX_DIM`] vectors.
fn lanczos_apply(h: &DMatrix<C64>, v: &DVector<C64>, scale: C64) -> Option<DVector<C64>> {
    let beta0 = v.norm();
    if beta0 == 0.0 {
        return Some(v.clone());
    }
    let n = v.len();
    let mut basis: Vec<DVector<C64>> = vec![v / C64::new(beta0, 0.0)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..KRYLOV_MAX_DIM.min(n) {
        let mut w = h * &basis[j];
        let alpha = basis[j].dotc(&w).re;
        alphas.push(alpha);
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for q in &basis {
                let overlap = q.dotc(&w);
                w -= q * overlap;
            }
        }
        let beta = w.norm();
        let m = alphas.len();
        let exhausted = beta <= 1e-14 * beta0.max(1.0) || m == n;
        if m < 4 && !exhausted && m < KRYLOV_MAX_DIM.min(n) {
            betas.push(beta);
            basis.push(w / C64::new(beta, 0.0));
            continue;
        }
        let mut tri = DMatrix::<f64>::zeros(m, m);
        for (i, &a) in alphas.iter().enumerate() {
            tri[(i, i)] = a;
        }
        for (i, &b) in betas.iter().enumerate() {
            tri[(i, i + 1)] = b;
            tri[(i + 1, i)] = b;
        }
        // exp(scale·T)·e₁ from the real eigenpairs of the tridiagonal
        let eig = SymmetricEigen::new(tri);
        let vecs = &eig.eigenvectors;
        let y = DVector::<C64>::from_fn(m, |i, _| {
            (0..m)
                .map(|k| C64::new(vecs[(i, k)] * vecs[(0, k)], 0.0) * (scale * eig.eigenvalues[k]).exp())
                .sum()
        });
        let residual = beta * y[m - 1].norm() * beta0;
        if residual < KRYLOV_TOL || exhausted {
            let mut out = DVector::<C64>::zeros(n);
            for (q, &c) in basis.iter().zip(y.iter()) {
                out += q * (c * beta0);
            }
            return Some(out);
        }
        betas.push(beta);
        basis.push(w / C64::new(beta, 0.0));
    }
    None
}

/// Applies `exp(scale·h)` to `v`. The output has the shape of `v`.
pub fn expm_apply(h: &DenseTensor, v: &DenseTensor, scale: C64) -> Result<DenseTensor> {
    let hm = h.as_square()?;
    if hm.nrows() != v.len() {
        return Err(Error::Shape(format!(
            "generator of dim {} applied to vector of length {}",
            hm.nrows(),
            v.len()
        )));
    }
    if scale == ZERO {
        return Ok(v.clone());
    }
    let vec = DVector::from_column_slice(v.data());
    let out = expm_apply_matrix(&hm, &vec, scale);
    DenseTensor::new(v.shape.clone(), out.iter().copied().collect())
}

pub(crate) fn expm_apply_matrix(h: &DMatrix<C64>, v: &DVector<C64>, scale: C64) -> DVector<C64> {
    if h.nrows() > DENSE_EXPM_MAX_DIM && is_hermitian_matrix(h) {
        if let Some(out) = lanczos_apply(h, v, scale) {
            return out;
        }
        log::debug!("lanczos did not converge at dim {}; using dense route", h.nrows());
    }
    dense_apply(h, v, scale)
}

#[cfg(test)]
pub(crate) fn lanczos_for_tests(h: &DMatrix<C64>, v: &DVector<C64>, scale: C64) -> Option<DVector<C64>> {
    lanczos_apply(h, v, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseTensor {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DenseTensor::new(shape, data).unwrap()
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DenseTensor {
        let a = random_tensor(vec![n, n], rng);
        let ad = a.dagger().unwrap();
        let mut h = a.clone();
        for (x, y) in h.data_mut().iter_mut().zip(ad.data()) {
            *x = (*x + *y) * 0.5;
        }
        h
    }

    /// Naive contraction: loop over every full index assignment.
    fn naive_contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> DenseTensor {
        let free_a: Vec<usize> = (0..a.rank()).filter(|k| !pairs.iter().any(|p| p.0 == *k)).collect();
        let free_b: Vec<usize> = (0..b.rank()).filter(|k| !pairs.iter().any(|p| p.1 == *k)).collect();
        let out_shape: Vec<usize> = free_a
            .iter()
            .map(|&k| a.shape()[k])
            .chain(free_b.iter().map(|&k| b.shape()[k]))
            .collect();
        let sum_shape: Vec<usize> = pairs.iter().map(|p| a.shape()[p.0]).collect();
        let mut out = DenseTensor::zeros(out_shape.clone());
        let out_len: usize = out_shape.iter().product();
        let sum_len: usize = sum_shape.iter().product();
        let unravel = |mut flat: usize, shape: &[usize]| {
            let mut idx = vec![0; shape.len()];
            for k in (0..shape.len()).rev() {
                idx[k] = flat % shape[k];
                flat /= shape[k];
            }
            idx
        };
        for o in 0..out_len {
            let oi = unravel(o, &out_shape);
            let mut acc = ZERO;
            for s in 0..sum_len {
                let si = unravel(s, &sum_shape);
                let mut ia = vec![0; a.rank()];
                let mut ib = vec![0; b.rank()];
                for (n, &k) in free_a.iter().enumerate() {
                    ia[k] = oi[n];
                }
                for (n, &k) in free_b.iter().enumerate() {
                    ib[k] = oi[free_a.len() + n];
                }
                for (n, p) in pairs.iter().enumerate() {
                    ia[p.0] = si[n];
                    ib[p.1] = si[n];
                }
                acc += a.get(&ia) * b.get(&ib);
            }
            out.data_mut()[o] = acc;
        }
        out
    }

    #[test]
    fn contract_identity_and_bit_flip() {
        let id = DenseTensor::identity(2);
        let up = DenseTensor::vector(vec![ONE, ZERO]);
        let out = contract(&id, &up, &[(1, 0)]).unwrap();
        assert_eq!(out.data(), &[ONE, ZERO]);

        let x = DenseTensor::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = contract(&x, &up, &[(1, 0)]).unwrap();
        assert_eq!(out.data(), &[ZERO, ONE]);
    }

    #[test]
    fn contract_matches_triple_loop_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tensor(vec![3, 4], &mut rng);
        let b = random_tensor(vec![4, 2], &mut rng);
        let out = contract(&a, &b, &[(1, 0)]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += a.get(&[i, k]) * b.get(&[k, j]);
                }
                assert!((out.get(&[i, j]) - acc).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn contract_rejects_mismatched_axes() {
        let a = DenseTensor::zeros(vec![2, 3]);
        let b = DenseTensor::zeros(vec![2, 3]);
        assert!(matches!(
            contract(&a, &b, &[(1, 0)]),
            Err(Error::DimensionMismatch { dim_a: 3, dim_b: 2, .. })
        ));
        assert!(contract(&a, &b, &[(0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn permute_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(vec![2, 3, 4], &mut rng);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), t.get(&[1, 2, 3]));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn factorize_identity() {
        let id = DenseTensor::identity(2);
        let (q, r) = factorize_bond(&id, 1, Direction::Left).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((q.get(&[i, j]).norm() - expect).abs() < 1e-14);
                assert!((r.get(&[i, j]).norm() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn factorize_rank_one_reconstructs() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.25, 1.5, -1.0];
        let mut vals = Vec::new();
        for a in u {
            for b in v {
                vals.push(a * b);
            }
        }
        let t = DenseTensor::from_real(4, 3, &vals).unwrap();
        for dir in [Direction::Left, Direction::Right] {
            let (a, b) = factorize_bond(&t, 1, dir).unwrap();
            let back = a.matmul(&b).unwrap();
            assert!(back.max_abs_diff(&t) <= 1e-12);
        }
    }

    fn isometry_error(q: &DenseTensor, split: usize, left: bool) -> f64 {
        let m = q.to_matrix(split).unwrap();
        let g = if left { m.adjoint() * &m } else { &m * m.adjoint() };
        let n = g.nrows();
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                err = err.max((g[(i, j)] - target).norm());
            }
        }
        err
    }

    #[test]
    fn svd_identity_keeps_first_of_tie() {
        let split = svd_truncate(&DenseTensor::identity(2), 1, 1, 0.0).unwrap();
        assert_eq!(split.bond_dim(), 1);
        assert!((split.singular_values[0] - 1.0).abs() < 1e-14);
        assert!((split.discarded_weight - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_rank_one_is_exact() {
        let mut vals = Vec::new();
        for a in [1.0, 2.0, -1.0, 0.5] {
            for b in [0.3, -0.7, 1.1, 2.0] {
                vals.push(a * b);
            }
        }
        let t = DenseTensor::from_real(4, 4, &vals).unwrap();
        let split = svd_truncate(&t, 1, 1, 0.0).unwrap();
        assert!(split.discarded_weight <= 1e-24);
        let back = split.left_weighted().matmul(&split.right_isometry).unwrap();
        assert!(back.max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn svd_truncation_error_equals_discarded_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_tensor(vec![4, 4], &mut rng);
        // full SVD as the reference
        let full = t.to_matrix(1).unwrap().svd(false, false);
        let mut all: Vec<f64> = full.singular_values.iter().copied().collect();
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected: f64 = all[2..].iter().map(|s| s * s).sum();

        let split = svd_truncate(&t, 1, 2, 0.0).unwrap();
        let back = split.left_weighted().matmul(&split.right_isometry).unwrap();
        let err2: f64 = back.data().iter().zip(t.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!((err2 - split.discarded_weight).abs() < 1e-12);
        assert!((expected - split.discarded_weight).abs() < 1e-12);
        assert!(isometry_error(&split.left_isometry, 1, true) < 1e-12);
        assert!(isometry_error(&split.right_isometry, 1, false) < 1e-12);
    }

    #[test]
    fn svd_zero_matrix_keeps_one() {
        let split = svd_truncate(&DenseTensor::zeros(vec![3, 3]), 1, 3, 1e-10).unwrap();
        assert_eq!(split.bond_dim(), 1);
        assert_eq!(split.discarded_weight, 0.0);
    }

    #[test]
    fn svd_rejects_bad_arguments() {
        let t = DenseTensor::identity(2);
        assert!(svd_truncate(&t, 1, 0, 0.0).is_err());
        assert!(svd_truncate(&t, 1, 1, -1.0).is_err());
        assert!(svd_truncate(&t, 0, 1, 0.0).is_err());
    }

    #[test]
    fn expm_zero_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_tensor(vec![3, 3], &mut rng);
        let v = random_tensor(vec![3], &mut rng);
        assert_eq!(expm_apply(&h, &v, ZERO).unwrap(), v);
    }

    #[test]
    fn expm_pauli_x_rotation() {
        let x = DenseTensor::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let v = DenseTensor::vector(vec![ONE, ZERO]);
        let theta: f64 = 0.3;
        let out = expm_apply(&x, &v, C64::new(0.0, -theta)).unwrap();
        assert!((out.data()[0] - C64::new(theta.cos(), 0.0)).norm() < 1e-14);
        assert!((out.data()[1] - C64::new(0.0, -theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_preserves_norm_for_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_hermitian(12, &mut rng);
        let v = random_tensor(vec![12], &mut rng);
        let out = expm_apply(&h, &v, C64::new(0.0, -0.01)).unwrap();
        assert!((out.norm() - v.norm()).abs() < 1e-12);
    }

    #[test]
    fn expm_non_hermitian_matches_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_tensor(vec![4, 4], &mut rng);
        let v = random_tensor(vec![4], &mut rng);
        let s = C64::new(0.1, -0.2);
        let out = expm_apply(&h, &v, s).unwrap();
        // truncated Taylor series as the reference
        let hm = h.as_square().unwrap() * s;
        let mut term = DVector::from_column_slice(v.data());
        let mut acc = term.clone();
        for k in 1..40 {
            term = &hm * term / C64::new(k as f64, 0.0);
            acc += &term;
        }
        for (a, b) in out.data().iter().zip(acc.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = random_hermitian(80, &mut rng);
        let v = random_tensor(vec![80], &mut rng);
        let hm = h.as_square().unwrap();
        let vv = DVector::from_column_slice(v.data());
        let s = C64::new(0.0, -0.05);
        let krylov = lanczos_for_tests(&hm, &vv, s).expect("converges for small steps");
        let dense = dense_apply(&hm, &vv, s);
        assert!((krylov - dense).norm() < 1e-10);
        // large step: the public entry point still returns the dense answer
        let s = C64::new(0.0, -50.0);
        let out = expm_apply(&h, &v, s).unwrap();
        let dense = dense_apply(&hm, &vv, s);
        for (a, b) in out.data().iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn contract_agrees_with_naive_loops(
            seed in any::<u64>(),
            dims_a in proptest::collection::vec(1usize..=4, 1..=3),
            dims_b_extra in proptest::collection::vec(1usize..=4, 0..=2),
            n_pairs in 1usize..=2,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_pairs = n_pairs.min(dims_a.len());
            // b shares the last n_pairs axes of a, in reverse order, then its own
            let shared: Vec<usize> = dims_a[dims_a.len() - n_pairs..].to_vec();
            let mut dims_b: Vec<usize> = shared.iter().rev().copied().collect();
            dims_b.extend(dims_b_extra);
            let a = random_tensor(dims_a.clone(), &mut rng);
            let b = random_tensor(dims_b, &mut rng);
            let pairs: Vec<(usize, usize)> = (0..n_pairs)
                .map(|p| (dims_a.len() - n_pairs + p, n_pairs - 1 - p))
                .collect();
            let fast = contract(&a, &b, &pairs).unwrap();
            let slow = naive_contract(&a, &b, &pairs);
            prop_assert_eq!(fast.shape(), slow.shape());
            prop_assert!(fast.max_abs_diff(&slow) < 1e-12);
        }

        #[test]
        fn factorizations_reconstruct_and_are_isometric(
            seed in any::<u64>(),
            rows in 1usize..=6,
            cols in 1usize..=6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(vec![rows, cols], &mut rng);
            let (q, r) = factorize_bond(&t, 1, Direction::Left).unwrap();
            prop_assert!(q.matmul(&r).unwrap().max_abs_diff(&t) < 1e-12);
            prop_assert!(isometry_error(&q, 1, true) < 1e-12);
            let (l, q) = factorize_bond(&t, 1, Direction::Right).unwrap();
            prop_assert!(l.matmul(&q).unwrap().max_abs_diff(&t) < 1e-12);
            prop_assert!(isometry_error(&q, 1, false) < 1e-12);
        }

        #[test]
        fn full_rank_svd_is_lossless(seed in any::<u64>(), rows in 1usize..=5, cols in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(vec![rows, cols], &mut rng);
            let split = svd_truncate(&t, 1, rows.min(cols), 0.0).unwrap();
            prop_assert!(split.discarded_weight <= 1e-24);
            let back = split.left_weighted().matmul(&split.right_isometry).unwrap();
            prop_assert!(back.max_abs_diff(&t) < 1e-12);
            prop_assert!(split.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn expm_composes_and_is_unitary(seed in any::<u64>(), n in 1usize..=8, theta in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(n, &mut rng);
            let v = random_tensor(vec![n], &mut rng);
            let s = C64::new(0.0, theta);
            let once = expm_apply(&h, &v, s).unwrap();
            prop_assert!((once.norm() - v.norm()).abs() < 1e-10);
            let twice = expm_apply(&h, &once, s).unwrap();
            let double = expm_apply(&h, &v, s * 2.0).unwrap();
            prop_assert!(twice.max_abs_diff(&double) < 1e-10);
        }
    }
}
