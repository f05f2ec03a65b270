//! Dense reference solvers for small chains: the master equation on `2^N × 2^N`
//! density matrices and state-vector trajectories that share the stepper in
//! [`crate::tjm`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::ops;
use crate::tensor::{expm_dense, DenseTensor, C64};
use crate::tjm::{run_trajectory_from, SimulationContext, TrajectoryBackend, TrajectoryRecord};

pub const MASTER_MAX_SITES: usize = 6;
pub const DENSE_TRAJECTORY_MAX_SITES: usize = 12;
pub const DEFAULT_SUBSTEPS: usize = 10;

fn ensure_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::SizeCap { what, size: n, cap });
    }
    if n == 0 {
        return Err(Error::EmptyInput("chain needs at least one site"));
    }
    Ok(())
}

/// `H = −J Σ Z_i Z_{i+1} − g Σ X_i` assembled term by term.
pub fn tfi_dense(n: usize, j_coupling: f64, g_field: f64) -> Result<DMatrix<C64>> {
    ensure_cap("dense TFI Hamiltonian", n, DENSE_TRAJECTORY_MAX_SITES)?;
    let dim = 1usize << n;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for idx in 0..dim {
        let spin = |site: usize| if idx >> (n - 1 - site) & 1 == 0 { 1.0 } else { -1.0 };
        let zz: f64 = (0..n.saturating_sub(1)).map(|i| spin(i) * spin(i + 1)).sum();
        h[(idx, idx)] += C64::new(-j_coupling * zz, 0.0);
        for site in 0..n {
            h[(idx ^ (1 << (n - 1 - site)), idx)] += C64::new(-g_field, 0.0);
        }
    }
    Ok(h)
}

/// `op` acting on `site` of an `n`-site register, applied to the rows of `m`.
fn apply_site_rows(m: &mut DMatrix<C64>, n: usize, site: usize, op: &DenseTensor) {
    let o = op.data();
    let bit = 1usize << (n - 1 - site);
    let dim = m.nrows();
    for col in 0..m.ncols() {
        for lo in 0..dim {
            if lo & bit != 0 {
                continue;
            }
            let hi = lo | bit;
            let (a, b) = (m[(lo, col)], m[(hi, col)]);
            m[(lo, col)] = o[0] * a + o[1] * b;
            m[(hi, col)] = o[2] * a + o[3] * b;
        }
    }
}

/// `m ← m·op_site†`.
fn apply_site_cols_adjoint(m: &mut DMatrix<C64>, n: usize, site: usize, op: &DenseTensor) {
    let o = op.data();
    let bit = 1usize << (n - 1 - site);
    let dim = m.ncols();
    for row in 0..m.nrows() {
        for lo in 0..dim {
            if lo & bit != 0 {
                continue;
            }
            let hi = lo | bit;
            let (a, b) = (m[(row, lo)], m[(row, hi)]);
            m[(row, lo)] = a * o[0].conj() + b * o[1].conj();
            m[(row, hi)] = a * o[2].conj() + b * o[3].conj();
        }
    }
}

/// Full-register matrix of a single-site operator.
pub fn embed_site(n: usize, site: usize, op: &DenseTensor) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::identity(1 << n, 1 << n);
    apply_site_rows(&mut m, n, site, op);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseDensityMatrix {
    pub n_sites: usize,
    pub rho: DMatrix<C64>,
}

impl DenseDensityMatrix {
    pub fn pure(psi: &DVector<C64>, n_sites: usize) -> Result<Self> {
        if psi.len() != 1 << n_sites {
            return Err(Error::Shape(format!("vector of length {} for {n_sites} sites", psi.len())));
        }
        Ok(Self {
            n_sites,
            rho: psi * psi.adjoint(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Tr(op_site ρ)`.
    pub fn expect(&self, site: usize, op: &DenseTensor) -> f64 {
        let mut m = self.rho.clone();
        apply_site_rows(&mut m, self.n_sites, site, op);
        m.trace().re
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterOptions {
    /// RK4 substeps per output step.
    pub substeps: usize,
    /// Keep every `sample_stride`-th state; the final state is always kept.
    pub sample_stride: usize,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            sample_stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    pub states: Vec<DenseDensityMatrix>,
    /// Smallest eigenvalue seen at any kept time.
    pub min_eigenvalue: f64,
    /// Largest `|Tr ρ(t) − Tr ρ(0)|` over all steps.
    pub trace_drift: f64,
}

struct Dissipator {
    site: usize,
    schedule: usize,
    jump: DenseTensor,
    weight: DenseTensor,
}

/// `dρ/dt = −i[H, ρ] + Σ_k γ_k(t)(L_k ρ L_k† − ½{L_k†L_k, ρ})` with `L_k` already
/// carrying the normalization factor.
fn master_rhs(h: &DMatrix<C64>, terms: &[Dissipator], gamma: &[f64], n: usize, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let hr = h * rho;
    let mut out = (&hr - hr.adjoint()) * C64::new(0.0, -1.0);
    for term in terms {
        let g = gamma[term.schedule];
        if g == 0.0 {
            continue;
        }
        let mut sandwich = rho.clone();
        apply_site_rows(&mut sandwich, n, term.site, &term.jump);
        apply_site_cols_adjoint(&mut sandwich, n, term.site, &term.jump);
        let mut anti = rho.clone();
        apply_site_rows(&mut anti, n, term.site, &term.weight);
        let anti_sum = &anti + anti.adjoint();
        out += (sandwich - anti_sum * C64::new(0.5, 0.0)) * C64::new(g, 0.0);
    }
    out
}

/// Classical RK4 on the time-local master equation with the physical
/// (unshifted) rates, read at every stage time.
pub fn integrate_master(
    h: &DMatrix<C64>,
    noise: &NoiseModel,
    rho0: &DenseDensityMatrix,
    dt: f64,
    n_steps: usize,
    options: MasterOptions,
) -> Result<MasterSolution> {
    let n = rho0.n_sites;
    ensure_cap("dense master equation", n, MASTER_MAX_SITES)?;
    if h.nrows() != rho0.dim() || h.ncols() != rho0.dim() {
        return Err(Error::Shape(format!("Hamiltonian {}x{} for dim {}", h.nrows(), h.ncols(), rho0.dim())));
    }
    if !noise.is_empty() && noise.n_sites != n {
        return Err(Error::Shape(format!("noise for {} sites, state {n}", noise.n_sites)));
    }
    if !(dt > 0.0) || options.substeps == 0 {
        return Err(Error::InvalidArgument("dt and substeps must be positive".into()));
    }
    let terms: Vec<Dissipator> = noise
        .channels
        .iter()
        .map(|ch| Dissipator {
            site: ch.site,
            schedule: ch.schedule,
            jump: ch.scaled_operator(),
            weight: ch.weight_operator(),
        })
        .collect();
    let gamma_at = |t: f64| -> Vec<f64> { noise.schedules.iter().map(|s| s.gamma_at(t)).collect() };
    let f = |t: f64, rho: &DMatrix<C64>| master_rhs(h, &terms, &gamma_at(t), n, rho);

    let stride = options.sample_stride.max(1);
    let h_sub = dt / options.substeps as f64;
    let trace0 = rho0.trace();
    let mut rho = rho0.rho.clone();
    let mut solution = MasterSolution {
        times: vec![0.0],
        states: vec![rho0.clone()],
        min_eigenvalue: rho0.min_eigenvalue(),
        trace_drift: 0.0,
    };
    for step in 1..=n_steps {
        for sub in 0..options.substeps {
            let t = (step - 1) as f64 * dt + sub as f64 * h_sub;
            let k1 = f(t, &rho);
            let k2 = f(t + h_sub / 2.0, &(&rho + &k1 * C64::new(h_sub / 2.0, 0.0)));
            let k3 = f(t + h_sub / 2.0, &(&rho + &k2 * C64::new(h_sub / 2.0, 0.0)));
            let k4 = f(t + h_sub, &(&rho + &k3 * C64::new(h_sub, 0.0)));
            rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h_sub / 6.0, 0.0);
        }
        solution.trace_drift = solution.trace_drift.max((rho.trace() - trace0).norm());
        if step % stride == 0 || step == n_steps {
            let state = DenseDensityMatrix {
                n_sites: n,
                rho: rho.clone(),
            };
            solution.min_eigenvalue = solution.min_eigenvalue.min(state.min_eigenvalue());
            solution.times.push(step as f64 * dt);
            solution.states.push(state);
        }
    }
    Ok(solution)
}

/// State-vector backend for the trajectory stepper.
#[derive(Debug, Clone)]
pub struct DenseState {
    n_sites: usize,
    psi: DVector<C64>,
    hamiltonian: Arc<DMatrix<C64>>,
    /// `(δt, exp(−iHδt))`.
    propagator: Arc<(f64, DMatrix<C64>)>,
}

impl DenseState {
    pub fn new(psi: DVector<C64>, n_sites: usize, hamiltonian: Arc<DMatrix<C64>>, dt: f64) -> Result<Self> {
        ensure_cap("dense trajectory", n_sites, DENSE_TRAJECTORY_MAX_SITES)?;
        let dim = 1usize << n_sites;
        if psi.len() != dim || hamiltonian.nrows() != dim {
            return Err(Error::Shape(format!("dense trajectory of {n_sites} sites needs dimension {dim}")));
        }
        let u = expm_dense(&hamiltonian, C64::new(0.0, -dt));
        Ok(Self {
            n_sites,
            psi,
            hamiltonian,
            propagator: Arc::new((dt, u)),
        })
    }

    /// `|0…0⟩` with the Hamiltonian of `ctx`.
    pub fn ground_product(ctx: &SimulationContext) -> Result<Self> {
        let n = ctx.n_sites();
        ensure_cap("dense trajectory", n, DENSE_TRAJECTORY_MAX_SITES)?;
        let h = ctx.hamiltonian.to_dense()?.as_square()?;
        let mut psi = DVector::zeros(1 << n);
        psi[0] = C64::new(1.0, 0.0);
        Self::new(psi, n, Arc::new(h), ctx.dt)
    }

    pub fn with_vector(&self, psi: DVector<C64>) -> Result<Self> {
        if psi.len() != self.psi.len() {
            return Err(Error::Shape("replacement vector has the wrong length".into()));
        }
        Ok(Self { psi, ..self.clone() })
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.psi
    }
}

impl TrajectoryBackend for DenseState {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn norm_squared(&self) -> f64 {
        self.psi.norm_squared()
    }

    fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_squared();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::NumericalInconsistency(format!(
                "cannot normalize a state with squared norm {n2}"
            )));
        }
        self.psi /= C64::new(n2.sqrt(), 0.0);
        Ok(n2)
    }

    fn apply_site(&mut self, site: usize, op: &DenseTensor) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::InvalidArgument(format!("site {site} outside the chain")));
        }
        let before = self.norm_squared();
        let mut m = DMatrix::from_column_slice(self.psi.len(), 1, self.psi.as_slice());
        apply_site_rows(&mut m, self.n_sites, site, op);
        let after = m.norm_squared();
        if !(after > 1e-24 * before) {
            return Err(Error::AnnihilatedState { site });
        }
        self.psi = DVector::from_column_slice(m.as_slice());
        Ok(())
    }

    fn coherent_step(&mut self, _ctx: &SimulationContext, dt: f64) -> Result<()> {
        let (cached_dt, u) = &*self.propagator;
        self.psi = if *cached_dt == dt {
            u * &self.psi
        } else {
            expm_dense(&self.hamiltonian, C64::new(0.0, -dt)) * &self.psi
        };
        Ok(())
    }

    fn site_weight(&mut self, site: usize, op: &DenseTensor) -> Result<f64> {
        let mut m = DMatrix::from_column_slice(self.psi.len(), 1, self.psi.as_slice());
        apply_site_rows(&mut m, self.n_sites, site, op);
        Ok(self.psi.dotc(&DVector::from_column_slice(m.as_slice())).re)
    }
}

/// The stepper of [`crate::tjm`] on a state vector.
pub fn dense_trajectory(template: &DenseState, ctx: &SimulationContext, index: u64) -> Result<TrajectoryRecord> {
    run_trajectory_from(template.clone(), ctx, index)
}

/// `Tr(X_site ρ)` for every site, the default observable set.
pub fn transverse_profile(state: &DenseDensityMatrix) -> Vec<f64> {
    (0..state.n_sites).map(|s| state.expect(s, &ops::pauli_x())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::MpOperator;
    use crate::noise::{ChannelKind, RateSchedule};
    use crate::tjm::{propagate_no_jump, Observable};

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    fn plus_state() -> DenseDensityMatrix {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        DenseDensityMatrix::pure(&DVector::from_vec(vec![h, h]), 1).unwrap()
    }

    fn ground(n: usize) -> DenseDensityMatrix {
        let mut psi = DVector::zeros(1 << n);
        psi[0] = C64::new(1.0, 0.0);
        DenseDensityMatrix::pure(&psi, n).unwrap()
    }

    #[test]
    fn tfi_dense_matches_mpo() {
        for n in 1..=5 {
            let a = tfi_dense(n, 0.7, -0.3).unwrap();
            let b = MpOperator::build_tfi(n, 0.7, -0.3).unwrap().to_dense().unwrap().as_square().unwrap();
            assert!(max_abs(&(a - b)) < 1e-14);
        }
    }

    #[test]
    fn site_application_matches_kronecker_embedding() {
        let n = 3;
        let op = ops::sigma_plus();
        let kron = ops::identity()
            .kron(&op)
            .unwrap()
            .kron(&ops::identity())
            .unwrap()
            .as_square()
            .unwrap();
        assert!(max_abs(&(embed_site(n, 1, &op) - kron)) < 1e-15);
    }

    #[test]
    fn constant_dephasing_coherence_decays_analytically() {
        let gamma = 1.3;
        let noise = NoiseModel::uniform(1, &[(ChannelKind::Dephasing, RateSchedule::constant(gamma))]).unwrap();
        let h = DMatrix::<C64>::zeros(2, 2);
        let sol = integrate_master(&h, &noise, &plus_state(), 0.01, 100, MasterOptions::default()).unwrap();
        for (t, s) in sol.times.iter().zip(&sol.states) {
            let expected = 0.5 * (-2.0 * gamma * t).exp();
            assert!((s.rho[(0, 1)].re - expected).abs() < 1e-9);
        }
        assert!(sol.trace_drift < 1e-12);
    }

    #[test]
    fn closed_system_is_unitary() {
        let n = 2;
        let h = tfi_dense(n, 1.0, 0.5).unwrap();
        let rho0 = ground(n);
        let sol = integrate_master(&h, &NoiseModel::none(n), &rho0, 0.01, 100, MasterOptions::default()).unwrap();
        let u = expm_dense(&h, C64::new(0.0, -1.0));
        let exact = &u * &rho0.rho * u.adjoint();
        let last = sol.states.last().unwrap();
        assert!(max_abs(&(&last.rho - exact)) < 1e-10);
        assert!((last.purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_rates_keep_trace_and_hermiticity() {
        let n = 2;
        let noise = NoiseModel::uniform(
            n,
            &[
                (ChannelKind::Excitation, RateSchedule::benchmark()),
                (ChannelKind::Relaxation, RateSchedule::constant(8.24)),
            ],
        )
        .unwrap();
        let h = tfi_dense(n, 1.0, 0.5).unwrap();
        let sol = integrate_master(&h, &noise, &ground(n), 0.01, 200, MasterOptions::default()).unwrap();
        assert!(sol.trace_drift < 1e-8);
        assert!(sol.states.iter().all(|s| s.hermiticity_error() < 1e-10));
    }

    #[test]
    fn positive_rates_keep_positivity() {
        let n = 2;
        let noise = NoiseModel::uniform(n, &ChannelKind::ALL.map(|k| (k, RateSchedule::constant(3.0)))).unwrap();
        let h = tfi_dense(n, 1.0, 0.5).unwrap();
        let opts = MasterOptions {
            substeps: 4,
            sample_stride: 5,
        };
        let sol = integrate_master(&h, &noise, &ground(n), 0.01, 100, opts).unwrap();
        assert!(sol.min_eigenvalue > -1e-8);
        assert_eq!(sol.times.len(), 21);
    }

    #[test]
    fn size_caps() {
        let h = DMatrix::<C64>::zeros(128, 128);
        let rho = ground(7);
        assert!(matches!(
            integrate_master(&h, &NoiseModel::none(7), &rho, 0.1, 1, MasterOptions::default()),
            Err(Error::SizeCap { cap: 6, .. })
        ));
        assert!(matches!(tfi_dense(13, 1.0, 1.0), Err(Error::SizeCap { cap: 12, .. })));
    }

    fn context(n: usize, noise: NoiseModel, dt: f64, steps: usize) -> SimulationContext {
        let mut ctx = SimulationContext::new(MpOperator::build_tfi(n, 1.0, 0.5).unwrap(), noise, dt, steps).unwrap();
        ctx.chi_max = 1 << n;
        ctx.observables = vec![Observable::X, Observable::Z];
        ctx
    }

    #[test]
    fn dense_and_mps_trajectories_agree() {
        let n = 3;
        let noise = NoiseModel::uniform(n, &[(ChannelKind::Dephasing, RateSchedule::benchmark())]).unwrap();
        let ctx = context(n, noise, 0.01, 80);
        let template = DenseState::ground_product(&ctx).unwrap();
        for index in 0..3 {
            let a = dense_trajectory(&template, &ctx, index).unwrap();
            let b = crate::tjm::run_trajectory(&ctx, index).unwrap();
            assert_eq!(a.jumps.len(), b.jumps.len());
            for (ja, jb) in a.jumps.iter().zip(&b.jumps) {
                assert_eq!((ja.step, ja.channel), (jb.step, jb.channel));
            }
            for (ra, rb) in a.values.iter().zip(&b.values) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
            for (x, y) in a.mu.iter().zip(&b.mu) {
                assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_noise_dense_trajectory_is_unitary() {
        let n = 2;
        let ctx = context(n, NoiseModel::none(n), 0.05, 20);
        let template = DenseState::ground_product(&ctx).unwrap();
        let rec = dense_trajectory(&template, &ctx, 0).unwrap();
        assert!(rec.jumps.is_empty());
        let h = tfi_dense(n, 1.0, 0.5).unwrap();
        let psi = expm_dense(&h, C64::new(0.0, -1.0)).column(0).into_owned();
        let rho = DenseDensityMatrix::pure(&psi, n).unwrap();
        let last = rec.values.last().unwrap();
        assert!((last[0] - rho.expect(0, &ops::pauli_x())).abs() < 1e-10);
    }

    #[test]
    fn no_jump_product_matches_effective_hamiltonian() {
        let n = 2;
        // dephasing alone commutes with every factor; relaxation does not
        let noise = NoiseModel::uniform(
            n,
            &[
                (ChannelKind::Excitation, RateSchedule::constant(0.5)),
                (ChannelKind::Relaxation, RateSchedule::constant(3.0)),
            ],
        )
        .unwrap();
        let h = tfi_dense(n, 1.0, 0.5).unwrap();
        let mut heff = h.clone();
        for ch in &noise.channels {
            let w = embed_site(n, ch.site, &ch.weight_operator());
            let rate = noise.schedules[ch.schedule].gamma_inf;
            heff -= w * C64::new(0.0, 0.5 * rate);
        }
        let exact = expm_dense(&heff, C64::new(0.0, -1.0)).column(0).into_owned();
        let mut errors = Vec::new();
        for steps in [20, 40] {
            let ctx = context(n, noise.clone(), 1.0 / steps as f64, steps);
            let mut state = DenseState::ground_product(&ctx).unwrap();
            propagate_no_jump(&mut state, &ctx).unwrap();
            errors.push((state.vector() - &exact).norm());
        }
        let ratio = errors[0] / errors[1];
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }
}
