//! Open-boundary matrix product states in mixed-canonical form.
//!
//! Site tensors have shape `(left bond, physical, right bond)`. Tensors left of
//! the orthogonality center are left isometries, tensors right of it are right
//! isometries, so the squared norm of the state is the squared Frobenius norm
//! of the center tensor. The state is not forced to unit norm: the stepper
//! relies on the norm deficit accumulated by dissipative factors.

use crate::error::{Error, Result};
use crate::tensor::{contract, factorize_bond, svd_truncate, DenseTensor, Direction, C64, ONE, ZERO};

pub const PHYS_DIM: usize = 2;
pub const DEFAULT_DENSE_CAP: usize = 14;

/// Squared norm below which an operator application counts as annihilation,
/// relative to the squared norm before the application.
const ANNIHILATION_TOL: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    pub(crate) tensors: Vec<DenseTensor>,
    pub(crate) center: usize,
}

impl MpsState {
    pub fn from_product_state(bits: &[u8]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyInput("product state needs at least one site"));
        }
        let locals = bits
            .iter()
            .map(|&b| match b {
                0 => Ok([ONE, ZERO]),
                1 => Ok([ZERO, ONE]),
                other => Err(Error::InvalidArgument(format!("bit value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_local_vectors(&locals)
    }

    /// Product state `⊗_k v_k`, bond dimension one everywhere, center at site 0.
    pub fn from_local_vectors(locals: &[[C64; 2]]) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::EmptyInput("product state needs at least one site"));
        }
        let tensors = locals
            .iter()
            .map(|v| DenseTensor::new(vec![1, PHYS_DIM, 1], v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tensors, center: 0 })
    }

    /// Exact MPS of a dense `2^n` amplitude vector (site 0 is the most
    /// significant bit), center at site 0.
    pub fn from_dense(amplitudes: &[C64], n_sites: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyInput("dense state needs at least one site"));
        }
        if amplitudes.len() != 1 << n_sites {
            return Err(Error::Shape(format!(
                "{} amplitudes for {n_sites} sites",
                amplitudes.len()
            )));
        }
        let mut tensors = Vec::with_capacity(n_sites);
        let mut rest = DenseTensor::new(vec![1, amplitudes.len()], amplitudes.to_vec())?;
        for site in 0..n_sites - 1 {
            let left = rest.shape()[0];
            let cols = rest.len() / (left * PHYS_DIM);
            let shaped = rest.reshape(vec![left, PHYS_DIM, cols])?;
            let split = svd_truncate(&shaped, 2, usize::MAX, 0.0)?;
            tensors.push(split.left_isometry.clone());
            rest = split.right_weighted();
            debug_assert_eq!(rest.shape()[0], tensors[site].shape()[2]);
        }
        let left = rest.shape()[0];
        tensors.push(rest.reshape(vec![left, PHYS_DIM, 1])?);
        let mut state = Self {
            tensors,
            center: n_sites - 1,
        };
        state.move_center(0)?;
        Ok(state)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    /// Dimensions of the `n - 1` internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.n_sites() - 1]
            .iter()
            .map(|t| t.shape()[2])
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Total number of stored complex entries.
    pub fn stored_elements(&self) -> usize {
        self.tensors.iter().map(DenseTensor::len).sum()
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "site {site} out of range for {} sites",
                self.n_sites()
            )));
        }
        Ok(())
    }

    /// Shifts the orthogonality center with QR steps to the right and LQ steps
    /// to the left. The represented vector is unchanged.
    pub fn move_center(&mut self, target: usize) -> Result<()> {
        self.check_site(target)?;
        while self.center < target {
            let k = self.center;
            let (q, r) = factorize_bond(&self.tensors[k], 2, Direction::Left)?;
            self.tensors[k] = q;
            self.tensors[k + 1] = contract(&r, &self.tensors[k + 1], &[(1, 0)])?;
            self.center += 1;
        }
        while self.center > target {
            let k = self.center;
            let (l, q) = factorize_bond(&self.tensors[k], 1, Direction::Right)?;
            self.tensors[k] = q;
            self.tensors[k - 1] = contract(&self.tensors[k - 1], &l, &[(2, 0)])?;
            self.center -= 1;
        }
        Ok(())
    }

    pub fn norm_squared(&self) -> f64 {
        self.tensors[self.center].norm_sqr()
    }

    pub fn scale(&mut self, factor: C64) {
        self.tensors[self.center].scale_mut(factor);
    }

    /// Rescales to unit norm and returns the previous squared norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_squared();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::NumericalInconsistency(format!(
                "cannot normalize a state with squared norm {n2}"
            )));
        }
        self.scale(C64::new(n2.sqrt().recip(), 0.0));
        Ok(n2)
    }

    /// Applies a single-site operator at `site`, after moving the center there.
    pub fn apply_local(&mut self, site: usize, op: &DenseTensor, renormalize: bool) -> Result<()> {
        if op.shape() != [PHYS_DIM, PHYS_DIM] {
            return Err(Error::Shape(format!("local operator must be 2x2, got {:?}", op.shape())));
        }
        self.move_center(site)?;
        let before = self.norm_squared();
        let applied = contract(op, &self.tensors[site], &[(1, 1)])?.permute(&[1, 0, 2])?;
        let after = applied.norm_sqr();
        if !(after > ANNIHILATION_TOL * before) {
            return Err(Error::AnnihilatedState { site });
        }
        self.tensors[site] = applied;
        if renormalize {
            self.scale(C64::new(after.sqrt().recip(), 0.0));
        }
        Ok(())
    }

    /// `⟨ψ|op_site|ψ⟩` without dividing by the norm.
    pub fn local_matrix_element(&mut self, site: usize, op: &DenseTensor) -> Result<C64> {
        if op.shape() != [PHYS_DIM, PHYS_DIM] {
            return Err(Error::Shape(format!("local operator must be 2x2, got {:?}", op.shape())));
        }
        self.move_center(site)?;
        let t = &self.tensors[site];
        let (left, _, right) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let data = t.data();
        let o = op.data();
        let mut acc = ZERO;
        for a in 0..left {
            for b in 0..right {
                for i in 0..PHYS_DIM {
                    let bra = data[(a * PHYS_DIM + i) * right + b].conj();
                    if bra == ZERO {
                        continue;
                    }
                    for j in 0..PHYS_DIM {
                        acc += bra * o[i * PHYS_DIM + j] * data[(a * PHYS_DIM + j) * right + b];
                    }
                }
            }
        }
        Ok(acc)
    }

    /// `⟨ψ|op_site|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expect_local(&mut self, site: usize, op: &DenseTensor) -> Result<C64> {
        let value = self.local_matrix_element(site, op)?;
        let n2 = self.norm_squared();
        if !(n2 > 0.0) {
            return Err(Error::NumericalInconsistency("expectation value of a zero state".into()));
        }
        Ok(value / n2)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseTensor> {
        let n = self.n_sites();
        if n > cap {
            return Err(Error::SizeCap {
                what: "dense conversion of MPS",
                size: n,
                cap,
            });
        }
        let first = &self.tensors[0];
        let mut acc = first
            .clone()
            .reshape(vec![first.shape()[1], first.shape()[2]])?;
        for t in &self.tensors[1..] {
            let next = contract(&acc, t, &[(1, 0)])?;
            let (rows, d, right) = (next.shape()[0], next.shape()[1], next.shape()[2]);
            acc = next.reshape(vec![rows * d, right])?;
        }
        let len = acc.len();
        acc.reshape(vec![len])
    }

    /// Largest deviation from the left/right isometry conditions on the two
    /// flanks of the center.
    pub fn canonical_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, t) in self.tensors.iter().enumerate() {
            if k == self.center {
                continue;
            }
            let (a, d, b) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let data = t.data();
            if k < self.center {
                for b1 in 0..b {
                    for b2 in 0..b {
                        let mut acc = ZERO;
                        for x in 0..a * d {
                            acc += data[x * b + b1].conj() * data[x * b + b2];
                        }
                        let target = if b1 == b2 { ONE } else { ZERO };
                        worst = worst.max((acc - target).norm());
                    }
                }
            } else {
                let row = d * b;
                for a1 in 0..a {
                    for a2 in 0..a {
                        let mut acc = ZERO;
                        for x in 0..row {
                            acc += data[a1 * row + x] * data[a2 * row + x].conj();
                        }
                        let target = if a1 == a2 { ONE } else { ZERO };
                        worst = worst.max((acc - target).norm());
                    }
                }
            }
        }
        worst
    }
}
