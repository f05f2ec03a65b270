//! Matrix product operators. Site tensors have shape
//! `(left bond, physical out, physical in, right bond)`.

use crate::error::{Error, Result};
use crate::mps::PHYS_DIM;
use crate::ops;
use crate::tensor::{contract, DenseTensor, C64};

pub const DENSE_MPO_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct MpOperator {
    pub(crate) tensors: Vec<DenseTensor>,
}

impl MpOperator {
    pub fn new(tensors: Vec<DenseTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::EmptyInput("MPO needs at least one site"));
        }
        for (k, t) in tensors.iter().enumerate() {
            if t.rank() != 4 || t.shape()[1] != PHYS_DIM || t.shape()[2] != PHYS_DIM {
                return Err(Error::Shape(format!("MPO site {k} has shape {:?}", t.shape())));
            }
            if k + 1 < tensors.len() && t.shape()[3] != tensors[k + 1].shape()[0] {
                return Err(Error::Shape(format!("MPO bond {k} dimensions disagree")));
            }
        }
        if tensors[0].shape()[0] != 1 || tensors[tensors.len() - 1].shape()[3] != 1 {
            return Err(Error::Shape("MPO boundary bonds must have dimension 1".into()));
        }
        Ok(Self { tensors })
    }

    pub fn identity(n_sites: usize) -> Result<Self> {
        let site = ops::identity().reshape(vec![1, PHYS_DIM, PHYS_DIM, 1])?;
        Self::new(vec![site; n_sites])
    }

    /// Transverse-field Ising chain with open boundaries,
    /// `H = −J Σ Z_i Z_{i+1} − g Σ X_i`.
    ///
    /// Bulk tensors follow the lower-triangular layout
    /// `[[I, 0, 0], [Z, 0, 0], [−gX, −JZ, I]]` (rows: left bond, columns: right
    /// bond); the first site takes the last row, the last site the first column.
    pub fn build_tfi(n_sites: usize, j_coupling: f64, g_field: f64) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::EmptyInput("TFI chain needs at least one site"));
        }
        let id = ops::identity();
        let z = ops::pauli_z();
        let field = ops::pauli_x().scaled(C64::new(-g_field, 0.0));
        let coupling = z.scaled(C64::new(-j_coupling, 0.0));

        if n_sites == 1 {
            return Self::new(vec![field.reshape(vec![1, PHYS_DIM, PHYS_DIM, 1])?]);
        }

        let block = |entries: &[(usize, usize, &DenseTensor)], rows: usize, cols: usize| {
            let mut w = DenseTensor::zeros(vec![rows, PHYS_DIM, PHYS_DIM, cols]);
            for &(r, c, op) in entries {
                for i in 0..PHYS_DIM {
                    for j in 0..PHYS_DIM {
                        w.set(&[r, i, j, c], op.get(&[i, j]));
                    }
                }
            }
            w
        };

        let mut tensors = Vec::with_capacity(n_sites);
        tensors.push(block(&[(0, 0, &field), (0, 1, &coupling), (0, 2, &id)], 1, 3));
        for _ in 1..n_sites - 1 {
            tensors.push(block(
                &[(0, 0, &id), (1, 0, &z), (2, 0, &field), (2, 1, &coupling), (2, 2, &id)],
                3,
                3,
            ));
        }
        tensors.push(block(&[(0, 0, &id), (1, 0, &z), (2, 0, &field)], 3, 1));
        Self::new(tensors)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.n_sites() - 1]
            .iter()
            .map(|t| t.shape()[3])
            .collect()
    }

    /// Dense `2^n × 2^n` matrix, rows indexed by the output configuration
    /// with site 0 as the most significant bit.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let n = self.n_sites();
        if n > DENSE_MPO_CAP {
            return Err(Error::SizeCap {
                what: "dense conversion of MPO",
                size: n,
                cap: DENSE_MPO_CAP,
            });
        }
        // acc: (out_block, in_block, bond)
        let first = &self.tensors[0];
        let mut acc = first
            .clone()
            .reshape(vec![PHYS_DIM, PHYS_DIM, first.shape()[3]])?;
        let mut block = PHYS_DIM;
        for t in &self.tensors[1..] {
            // (out, in, w) x (w, i, j, w') -> (out, in, i, j, w')
            let next = contract(&acc, t, &[(2, 0)])?;
            let right = t.shape()[3];
            let next = next.permute(&[0, 2, 1, 3, 4])?;
            block *= PHYS_DIM;
            acc = next.reshape(vec![block, block, right])?;
        }
        acc.reshape(vec![block, block])
    }
}

pub fn mpo_to_dense(h: &MpOperator) -> Result<DenseTensor> {
    h.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn site_operator(n: usize, site: usize, op: &DenseTensor) -> DenseTensor {
        let mut acc = DenseTensor::identity(1);
        for k in 0..n {
            let factor = if k == site { op.clone() } else { ops::identity() };
            acc = acc.kron(&factor).unwrap();
        }
        acc
    }

    /// The Hamiltonian assembled term by term from Kronecker products.
    fn explicit_tfi(n: usize, j: f64, g: f64) -> DenseTensor {
        let dim = 1 << n;
        let mut h = DenseTensor::zeros(vec![dim, dim]);
        let mut add = |term: DenseTensor, coeff: f64| {
            for (x, y) in h.data_mut().iter_mut().zip(term.data()) {
                *x += y * coeff;
            }
        };
        for i in 0..n.saturating_sub(1) {
            let zz = site_operator(n, i, &ops::pauli_z())
                .matmul(&site_operator(n, i + 1, &ops::pauli_z()))
                .unwrap();
            add(zz, -j);
        }
        for i in 0..n {
            add(site_operator(n, i, &ops::pauli_x()), -g);
        }
        h
    }

    #[test]
    fn single_site_is_field_only() {
        let h = MpOperator::build_tfi(1, 1.0, 0.5).unwrap().to_dense().unwrap();
        let expected = ops::pauli_x().scaled(C64::new(-0.5, 0.0));
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn two_sites_match_kronecker_form() {
        let h = MpOperator::build_tfi(2, 1.0, 0.5).unwrap().to_dense().unwrap();
        let id = ops::identity();
        let zz = ops::pauli_z().kron(&ops::pauli_z()).unwrap();
        let xi = ops::pauli_x().kron(&id).unwrap();
        let ix = id.kron(&ops::pauli_x()).unwrap();
        let mut expected = zz.scaled(C64::new(-1.0, 0.0));
        for ((e, a), b) in expected.data_mut().iter_mut().zip(xi.data()).zip(ix.data()) {
            *e -= (a + b) * 0.5;
        }
        assert!(h.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn zz_only_is_diagonal() {
        let h = MpOperator::build_tfi(2, 1.0, 0.0).unwrap().to_dense().unwrap();
        let diag = [-1.0, 1.0, 1.0, -1.0];
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { diag[i] } else { 0.0 };
                assert!((h.get(&[i, j]) - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn three_site_spectrum_matches_explicit_sum() {
        let from_mpo = MpOperator::build_tfi(3, 1.0, 0.5).unwrap().to_dense().unwrap();
        let explicit = explicit_tfi(3, 1.0, 0.5);
        let mut a: Vec<f64> = SymmetricEigen::new(from_mpo.as_square().unwrap())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        let mut b: Vec<f64> = SymmetricEigen::new(explicit.as_square().unwrap())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_mpo_is_identity() {
        let h = MpOperator::identity(3).unwrap().to_dense().unwrap();
        assert!(h.max_abs_diff(&DenseTensor::identity(8)) < 1e-15);
    }

    #[test]
    fn four_site_hamiltonian_is_hermitian() {
        let h = MpOperator::build_tfi(4, 1.0, 0.5).unwrap().to_dense().unwrap();
        assert!(h.is_hermitian(1e-13));
    }

    #[test]
    fn dense_matches_explicit_sum_over_parameter_grid() {
        let values = [0.0, 0.5, -0.5, 1.0, -1.0];
        for n in 1..=8 {
            // thin the grid for the larger chains
            let step = if n > 5 { 2 } else { 1 };
            for &j in values.iter().step_by(step) {
                for &g in values.iter().step_by(step) {
                    let mpo = MpOperator::build_tfi(n, j, g).unwrap();
                    if n >= 2 {
                        assert!(mpo.bond_dims().iter().all(|&d| d == 3));
                    }
                    let dense = mpo.to_dense().unwrap();
                    assert!(dense.max_abs_diff(&explicit_tfi(n, j, g)) < 1e-12, "n={n} J={j} g={g}");
                }
            }
        }
    }

    #[test]
    fn dense_conversion_is_capped() {
        let mpo = MpOperator::build_tfi(13, 1.0, 0.5).unwrap();
        assert!(matches!(mpo.to_dense(), Err(Error::SizeCap { cap: 12, .. })));
    }
}
