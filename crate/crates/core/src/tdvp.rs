//! Time-dependent variational principle sweeps for `exp(−iH δt)`.
//!
//! One step is a forward sweep over sites `0 → N−1` followed by a backward
//! sweep `N−1 → 0`, each advancing the local tensors by `δt/2`. Between local
//! updates the connecting bond (one-site mode) or site (two-site mode) is
//! evolved backwards by `δt/2`, which makes the step symmetric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mpo::MpOperator;
use crate::mps::MpsState;
use crate::tensor::{contract, expm_apply_matrix, factorize_bond, svd_truncate, DenseTensor, Direction, C64};

pub const DEFAULT_SVD_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    OneSite,
    TwoSite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    pub mode: SweepMode,
    /// Sum of squared singular values dropped by two-site truncations.
    pub discarded_weight: f64,
}

/// Left and right MPS†–MPO–MPS contractions around every site.
///
/// `left[k]` covers sites `0..k` and `right[k]` covers sites `k+1..N`; both
/// have shape `(bra bond, mpo bond, ket bond)`.
#[derive(Debug, Clone)]
pub struct EnvironmentStack {
    pub left: Vec<DenseTensor>,
    pub right: Vec<DenseTensor>,
}

fn trivial_env() -> DenseTensor {
    DenseTensor::new(vec![1, 1, 1], vec![C64::new(1.0, 0.0)]).expect("1x1x1")
}

pub(crate) fn extend_left(env: &DenseTensor, a: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    let t = contract(env, a, &[(2, 0)])?; // (a, w, j, b')
    let t = contract(&t, w, &[(1, 0), (2, 2)])?; // (a, b', i, w')
    let t = contract(&a.conj(), &t, &[(0, 0), (1, 2)])?; // (b, b', w')
    t.permute(&[0, 2, 1])
}

pub(crate) fn extend_right(env: &DenseTensor, b: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    let t = contract(b, env, &[(2, 2)])?; // (a', j, b, w')
    let t = contract(w, &t, &[(2, 1), (3, 3)])?; // (w, i, a', b)
    contract(&b.conj(), &t, &[(1, 1), (2, 3)]) // (a, w, a')
}

impl EnvironmentStack {
    /// Builds all right environments; requires the center at site 0.
    pub fn for_sweep(state: &MpsState, h: &MpOperator) -> Result<Self> {
        let n = state.n_sites();
        if state.center() != 0 {
            return Err(Error::ContractViolation("environment build needs the center at site 0".into()));
        }
        let mut right = vec![trivial_env(); n];
        for k in (0..n - 1).rev() {
            right[k] = extend_right(&right[k + 1], &state.tensors[k + 1], &h.tensors[k + 1])?;
        }
        Ok(Self {
            left: vec![trivial_env(); n],
            right,
        })
    }
}

fn square(t: DenseTensor, half_rank: usize) -> Result<DMatrix<C64>> {
    t.to_matrix(half_rank)
}

/// Effective Hamiltonian on one site tensor `(a, i, b)`.
fn effective_one_site(left: &DenseTensor, w: &DenseTensor, right: &DenseTensor) -> Result<DMatrix<C64>> {
    let t = contract(left, w, &[(1, 0)])?; // (a, a', i, j, w')
    let t = contract(&t, right, &[(4, 1)])?; // (a, a', i, j, b, b')
    square(t.permute(&[0, 2, 4, 1, 3, 5])?, 3)
}

/// Effective Hamiltonian on a two-site block `(a, i1, i2, b)`.
fn effective_two_site(
    left: &DenseTensor,
    w1: &DenseTensor,
    w2: &DenseTensor,
    right: &DenseTensor,
) -> Result<DMatrix<C64>> {
    let t = contract(left, w1, &[(1, 0)])?; // (a, a', i1, j1, v)
    let t = contract(&t, w2, &[(4, 0)])?; // (a, a', i1, j1, i2, j2, w')
    let t = contract(&t, right, &[(6, 1)])?; // (a, a', i1, j1, i2, j2, b, b')
    square(t.permute(&[0, 2, 4, 6, 1, 3, 5, 7])?, 4)
}

/// Effective Hamiltonian on a bond matrix `(a, b)`.
fn effective_bond(left: &DenseTensor, right: &DenseTensor) -> Result<DMatrix<C64>> {
    let t = contract(left, right, &[(1, 1)])?; // (a, a', b, b')
    square(t.permute(&[0, 2, 1, 3])?, 2)
}

/// `t ← exp(−i·h·τ) t`.
fn evolve(t: &mut DenseTensor, h: &DMatrix<C64>, tau: f64) -> Result<()> {
    if tau == 0.0 {
        return Ok(());
    }
    let v = DVector::from_column_slice(t.data());
    let out = expm_apply_matrix(h, &v, C64::new(0.0, -tau));
    t.data_mut().copy_from_slice(out.as_slice());
    Ok(())
}

fn check_sizes(state: &MpsState, h: &MpOperator) -> Result<()> {
    if state.n_sites() != h.n_sites() {
        return Err(Error::Shape(format!(
            "state has {} sites, operator {}",
            state.n_sites(),
            h.n_sites()
        )));
    }
    Ok(())
}

fn one_site_sweep(state: &mut MpsState, h: &MpOperator, dt: f64) -> Result<()> {
    let n = state.n_sites();
    let half = dt / 2.0;
    state.move_center(0)?;
    let mut env = EnvironmentStack::for_sweep(state, h)?;

    for k in 0..n {
        let heff = effective_one_site(&env.left[k], &h.tensors[k], &env.right[k])?;
        evolve(&mut state.tensors[k], &heff, half)?;
        if k + 1 < n {
            let (a, mut c) = factorize_bond(&state.tensors[k], 2, Direction::Left)?;
            env.left[k + 1] = extend_left(&env.left[k], &a, &h.tensors[k])?;
            state.tensors[k] = a;
            let hbond = effective_bond(&env.left[k + 1], &env.right[k])?;
            evolve(&mut c, &hbond, -half)?;
            state.tensors[k + 1] = contract(&c, &state.tensors[k + 1], &[(1, 0)])?;
            state.center = k + 1;
        }
    }
    for k in (0..n).rev() {
        let heff = effective_one_site(&env.left[k], &h.tensors[k], &env.right[k])?;
        evolve(&mut state.tensors[k], &heff, half)?;
        if k > 0 {
            let (mut c, b) = factorize_bond(&state.tensors[k], 1, Direction::Right)?;
            env.right[k - 1] = extend_right(&env.right[k], &b, &h.tensors[k])?;
            state.tensors[k] = b;
            let hbond = effective_bond(&env.left[k], &env.right[k - 1])?;
            evolve(&mut c, &hbond, -half)?;
            state.tensors[k - 1] = contract(&state.tensors[k - 1], &c, &[(2, 0)])?;
            state.center = k - 1;
        }
    }
    Ok(())
}

fn two_site_sweep(
    state: &mut MpsState,
    h: &MpOperator,
    dt: f64,
    chi_max: usize,
    threshold: f64,
) -> Result<f64> {
    let n = state.n_sites();
    let half = dt / 2.0;
    let mut discarded = 0.0;
    state.move_center(0)?;
    let mut env = EnvironmentStack::for_sweep(state, h)?;

    for k in 0..n - 1 {
        let mut theta = contract(&state.tensors[k], &state.tensors[k + 1], &[(2, 0)])?;
        let heff = effective_two_site(&env.left[k], &h.tensors[k], &h.tensors[k + 1], &env.right[k + 1])?;
        evolve(&mut theta, &heff, half)?;
        let split = svd_truncate(&theta, 2, chi_max, threshold)?;
        discarded += split.discarded_weight;
        env.left[k + 1] = extend_left(&env.left[k], &split.left_isometry, &h.tensors[k])?;
        state.tensors[k + 1] = split.right_weighted();
        state.tensors[k] = split.left_isometry;
        state.center = k + 1;
        if k + 2 < n {
            let heff = effective_one_site(&env.left[k + 1], &h.tensors[k + 1], &env.right[k + 1])?;
            evolve(&mut state.tensors[k + 1], &heff, -half)?;
        }
    }
    for k in (0..n - 1).rev() {
        let mut theta = contract(&state.tensors[k], &state.tensors[k + 1], &[(2, 0)])?;
        let heff = effective_two_site(&env.left[k], &h.tensors[k], &h.tensors[k + 1], &env.right[k + 1])?;
        evolve(&mut theta, &heff, half)?;
        let split = svd_truncate(&theta, 2, chi_max, threshold)?;
        discarded += split.discarded_weight;
        env.right[k] = extend_right(&env.right[k + 1], &split.right_isometry, &h.tensors[k + 1])?;
        state.tensors[k] = split.left_weighted();
        state.tensors[k + 1] = split.right_isometry;
        state.center = k;
        if k > 0 {
            let heff = effective_one_site(&env.left[k], &h.tensors[k], &env.right[k])?;
            evolve(&mut state.tensors[k], &heff, -half)?;
        }
    }
    Ok(discarded)
}

/// One symmetric TDVP step of length `dt`. Leaves the center at site 0.
pub fn tdvp_sweep(
    state: &mut MpsState,
    h: &MpOperator,
    dt: f64,
    mode: SweepMode,
    chi_max: usize,
    threshold: f64,
) -> Result<SweepReport> {
    check_sizes(state, h)?;
    if chi_max == 0 {
        return Err(Error::InvalidArgument("chi_max must be at least 1".into()));
    }
    let discarded_weight = match mode {
        SweepMode::TwoSite if state.n_sites() > 1 => two_site_sweep(state, h, dt, chi_max, threshold)?,
        _ => {
            one_site_sweep(state, h, dt)?;
            0.0
        }
    };
    Ok(SweepReport {
        mode,
        discarded_weight,
    })
}

/// Two-site while every bond is below `chi_max`, one-site afterwards.
pub fn choose_mode(state: &MpsState, chi_max: usize) -> SweepMode {
    if state.n_sites() > 1 && state.max_bond_dim() < chi_max {
        SweepMode::TwoSite
    } else {
        SweepMode::OneSite
    }
}

pub fn dynamic_step(
    state: &mut MpsState,
    h: &MpOperator,
    dt: f64,
    chi_max: usize,
    threshold: f64,
) -> Result<SweepReport> {
    let mode = choose_mode(state, chi_max);
    tdvp_sweep(state, h, dt, mode, chi_max, threshold)
}

/// `⟨ψ|H|ψ⟩` by contracting left environments across the whole chain.
pub fn mpo_expectation(state: &MpsState, h: &MpOperator) -> Result<C64> {
    check_sizes(state, h)?;
    let mut env = trivial_env();
    for (a, w) in state.tensors.iter().zip(&h.tensors) {
        env = extend_left(&env, a, w)?;
    }
    Ok(env.data()[0])
}
