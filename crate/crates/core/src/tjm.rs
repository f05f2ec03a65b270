//! The trajectory stepper.
//!
//! A run of `n` steps applies `F_0 = D(δt/2)`, then `n−1` bulk factors
//! `F_j = D(δt)U(δt)`, then `F_n = D(δt/2)U(δt)`, each followed by a jump
//! check. The evolving auxiliary state `Φ` sits half a dissipative step ahead
//! of the physical state; observables at `jδt` are read from a copy of `Φ`
//! advanced by the deterministic correction `D(δt/2)U(δt)`.
//!
//! Jumps are drawn with the shifted rates `r_k = γ_k + C_t`; the influence
//! martingale `μ` restores the physical rates.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpo::MpOperator;
use crate::mps::MpsState;
use crate::noise::{ChannelKind, NoiseModel, RateSnapshot};
use crate::ops;
use crate::tdvp::{dynamic_step, DEFAULT_SVD_THRESHOLD};
use crate::tensor::DenseTensor;

const COARSE_STEP_WARNING: f64 = 0.1;
const NEGATIVE_PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    X,
    Z,
}

impl Observable {
    pub fn operator(self) -> DenseTensor {
        match self {
            Observable::X => ops::pauli_x(),
            Observable::Z => ops::pauli_z(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::X => "x",
            Observable::Z => "z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrotterOrder {
    /// Symmetric splitting with half dissipative steps at both ends.
    Second,
    /// `F_j = D(δt)U(δt)` for every step; observables read directly from `Φ`.
    First,
}

/// Deliberate faults used to show that validation checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Jumps leave `μ` unchanged instead of multiplying by `γ_k/r_k`.
    UnitJumpRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRole {
    First,
    Bulk,
    Last,
}

/// Which factors one step applies and the time at which its rates are read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOperators {
    pub role: StepRole,
    /// Length of the coherent step `U`, if any. Applied before `D`.
    pub unitary: Option<f64>,
    /// Length of the dissipative interval covered by `D`.
    pub span: f64,
    /// Midpoint of that interval.
    pub rate_time: f64,
}

impl StepOperators {
    pub fn for_step(step: usize, n_steps: usize, dt: f64, order: TrotterOrder) -> Self {
        let role = if step == 0 {
            StepRole::First
        } else if step == n_steps {
            StepRole::Last
        } else {
            StepRole::Bulk
        };
        let t = step as f64 * dt;
        match (order, role) {
            (TrotterOrder::Second, StepRole::First) => Self {
                role,
                unitary: None,
                span: dt / 2.0,
                rate_time: dt / 4.0,
            },
            (TrotterOrder::Second, StepRole::Bulk) => Self {
                role,
                unitary: Some(dt),
                span: dt,
                rate_time: t,
            },
            (TrotterOrder::Second, StepRole::Last) => Self {
                role,
                unitary: Some(dt),
                span: dt / 2.0,
                rate_time: t - dt / 4.0,
            },
            (TrotterOrder::First, StepRole::First) => Self {
                role,
                unitary: None,
                span: 0.0,
                rate_time: 0.0,
            },
            (TrotterOrder::First, _) => Self {
                role,
                unitary: Some(dt),
                span: dt,
                rate_time: t - dt / 2.0,
            },
        }
    }

    /// The deterministic correction that turns `Φ((j−1)δt)` into the physical
    /// state at `jδt`.
    pub fn sampling_correction(step: usize, dt: f64) -> Self {
        Self {
            role: StepRole::Last,
            unitary: Some(dt),
            span: dt / 2.0,
            rate_time: step as f64 * dt - dt / 4.0,
        }
    }
}

/// Minimal interface the stepper needs from a state representation.
pub trait TrajectoryBackend: Clone {
    fn n_sites(&self) -> usize;
    fn norm_squared(&self) -> f64;
    /// Returns the squared norm before rescaling.
    fn normalize(&mut self) -> Result<f64>;
    fn apply_site(&mut self, site: usize, op: &DenseTensor) -> Result<()>;
    fn coherent_step(&mut self, ctx: &SimulationContext, dt: f64) -> Result<()>;
    /// `Re ⟨ψ|op_site|ψ⟩` without dividing by the norm.
    fn site_weight(&mut self, site: usize, op: &DenseTensor) -> Result<f64>;
    fn max_bond_dim(&self) -> usize {
        1
    }

    fn expect(&mut self, site: usize, op: &DenseTensor) -> Result<f64> {
        let value = self.site_weight(site, op)?;
        Ok(value / self.norm_squared())
    }
}

impl TrajectoryBackend for MpsState {
    fn n_sites(&self) -> usize {
        MpsState::n_sites(self)
    }

    fn norm_squared(&self) -> f64 {
        MpsState::norm_squared(self)
    }

    fn normalize(&mut self) -> Result<f64> {
        MpsState::normalize(self)
    }

    fn apply_site(&mut self, site: usize, op: &DenseTensor) -> Result<()> {
        self.apply_local(site, op, false)
    }

    fn coherent_step(&mut self, ctx: &SimulationContext, dt: f64) -> Result<()> {
        let report = dynamic_step(self, &ctx.hamiltonian, dt, ctx.chi_max, ctx.svd_threshold)?;
        if report.discarded_weight > 0.0 {
            log::trace!("truncation discarded {:.3e}", report.discarded_weight);
        }
        Ok(())
    }

    fn site_weight(&mut self, site: usize, op: &DenseTensor) -> Result<f64> {
        Ok(self.local_matrix_element(site, op)?.re)
    }

    fn max_bond_dim(&self) -> usize {
        MpsState::max_bond_dim(self)
    }
}

/// Immutable inputs shared by every trajectory of a run.
#[derive(Debug, Clone)]
pub struct SimulationContext {
    pub hamiltonian: MpOperator,
    pub noise: NoiseModel,
    pub dt: f64,
    pub n_steps: usize,
    pub chi_max: usize,
    pub svd_threshold: f64,
    pub observables: Vec<Observable>,
    /// Sites at which observables are recorded.
    pub sites: Vec<usize>,
    /// Record every `sample_stride`-th step; the final time is always recorded.
    pub sample_stride: usize,
    pub trotter: TrotterOrder,
    pub mutation: Option<Mutation>,
    pub base_seed: u64,
}

impl SimulationContext {
    pub fn new(hamiltonian: MpOperator, noise: NoiseModel, dt: f64, n_steps: usize) -> Result<Self> {
        let n = hamiltonian.n_sites();
        if noise.n_sites != n && !noise.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "noise model covers {} sites, Hamiltonian {n}",
                noise.n_sites
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self {
            hamiltonian,
            noise,
            dt,
            n_steps,
            chi_max: 1 << n.div_ceil(2).min(10),
            svd_threshold: DEFAULT_SVD_THRESHOLD,
            observables: vec![Observable::X],
            sites: (0..n).collect(),
            sample_stride: 1,
            trotter: TrotterOrder::Second,
            mutation: None,
            base_seed: 0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.hamiltonian.n_sites()
    }

    pub fn final_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Step indices at which observables are recorded.
    pub fn sample_steps(&self) -> Vec<usize> {
        let stride = self.sample_stride.max(1);
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(stride).collect();
        if steps.last() != Some(&self.n_steps) {
            steps.push(self.n_steps);
        }
        steps
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps().iter().map(|&j| j as f64 * self.dt).collect()
    }

    /// Values recorded per sample: observables outer, sites inner.
    pub fn values_per_sample(&self) -> usize {
        self.observables.len() * self.sites.len()
    }

    /// The random stream of trajectory `index`.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    /// Midpoint of the dissipative interval of the step.
    pub time: f64,
    pub channel: usize,
    pub kind: ChannelKind,
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub times: Vec<f64>,
    pub mu: Vec<f64>,
    /// One row per sample time, laid out as in [`SimulationContext::values_per_sample`].
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<JumpEvent>,
    pub max_bond_dim: usize,
    pub coarse_step_warning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpDecision {
    None,
    Channel(usize),
}

/// State carried along one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState<B> {
    pub phi: B,
    pub mu: f64,
    pub step: usize,
    pub jump_log: Vec<JumpEvent>,
    pub rng: ChaCha8Rng,
}

impl<B: TrajectoryBackend> TrajectoryState<B> {
    pub fn new(phi: B, rng: ChaCha8Rng) -> Self {
        Self {
            phi,
            mu: 1.0,
            step: 0,
            jump_log: Vec::new(),
            rng,
        }
    }
}

/// `δp = 1 − ‖FΦ‖²/‖Φ‖²`.
pub fn jump_probability(before_norm2: f64, after_norm2: f64) -> Result<f64> {
    let dp = 1.0 - after_norm2 / before_norm2;
    if dp < -NEGATIVE_PROBABILITY_TOL || !dp.is_finite() {
        return Err(Error::IntegratorFault(format!(
            "no-jump step increased the norm: δp = {dp:.3e}"
        )));
    }
    Ok(dp.max(0.0))
}

/// Applies `U` (if any) followed by the site-local dissipators, without
/// renormalizing.
pub fn no_jump_step<B: TrajectoryBackend>(
    phi: &mut B,
    ops: &StepOperators,
    rates: &RateSnapshot,
    ctx: &SimulationContext,
) -> Result<()> {
    if let Some(dt) = ops.unitary {
        phi.coherent_step(ctx, dt)?;
    }
    if ops.span > 0.0 && !ctx.noise.is_empty() {
        for (site, d) in ctx.noise.site_dissipators(rates, ops.span)?.iter().enumerate() {
            phi.apply_site(site, d)?;
        }
    }
    Ok(())
}

/// Per-channel weights `δp_k = r_k·span·‖c·L_k Φ'‖²` in channel order.
pub fn channel_weights<B: TrajectoryBackend>(
    phi: &mut B,
    rates: &RateSnapshot,
    span: f64,
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    noise
        .channels
        .iter()
        .map(|ch| {
            let w = phi.site_weight(ch.site, &ch.weight_operator())?;
            Ok(rates.shifted[ch.schedule] * span * w.max(0.0))
        })
        .collect()
}

/// Inverse-CDF channel choice. `select` is uniform on `[0, 1)`.
pub fn select_channel(weights: &[f64], select: f64) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NumericalInconsistency(
            "jump triggered but every channel weight vanishes".into(),
        ));
    }
    let target = select * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if target < acc && w > 0.0 {
            return Ok(k);
        }
    }
    Ok(last_positive)
}

/// Jump if `epsilon < δp`; the channel is chosen from `weights` with `select`.
pub fn sample_jump(dp: f64, epsilon: f64, weights: &[f64], select: impl FnOnce() -> f64) -> Result<JumpDecision> {
    if epsilon >= dp {
        return Ok(JumpDecision::None);
    }
    Ok(JumpDecision::Channel(select_channel(weights, select())?))
}

/// Applies `L_k` at the channel's site and renormalizes.
pub fn apply_jump<B: TrajectoryBackend>(phi: &mut B, channel: usize, noise: &NoiseModel) -> Result<()> {
    let ch = noise
        .channels
        .get(channel)
        .ok_or_else(|| Error::InvalidArgument(format!("no channel {channel}")))?;
    phi.apply_site(ch.site, &ch.operator)?;
    phi.normalize()?;
    Ok(())
}

/// `μ ← μ·exp(C·span)`, then `μ ← μ·γ_k/r_k` on a jump in channel `k`.
pub fn martingale_step(
    mu: f64,
    decision: JumpDecision,
    rates: &RateSnapshot,
    span: f64,
    noise: &NoiseModel,
    mutation: Option<Mutation>,
) -> Result<f64> {
    let mut mu = mu * (rates.shift * span).exp();
    if let JumpDecision::Channel(k) = decision {
        let schedule = noise.channels[k].schedule;
        let r = rates.shifted[schedule];
        if r == 0.0 {
            return Err(Error::NumericalInconsistency(format!("jump in channel {k} with zero rate")));
        }
        if mutation != Some(Mutation::UnitJumpRatio) {
            mu *= rates.gamma[schedule] / r;
        }
    }
    Ok(mu)
}

/// Outcome of one stepper call, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub jump_probability: f64,
    pub decision: JumpDecision,
}

/// One full step `j`: no-jump factors, jump check, renormalization, martingale.
pub fn advance<B: TrajectoryBackend>(ts: &mut TrajectoryState<B>, ctx: &SimulationContext) -> Result<StepOutcome> {
    let ops = StepOperators::for_step(ts.step, ctx.n_steps, ctx.dt, ctx.trotter);
    let rates = ctx.noise.rates_at(ops.rate_time);
    ts.phi.normalize()?;
    no_jump_step(&mut ts.phi, &ops, &rates, ctx)?;
    let dp = jump_probability(1.0, ts.phi.norm_squared())?;
    let epsilon: f64 = ts.rng.random();
    let decision = if epsilon < dp {
        let weights = channel_weights(&mut ts.phi, &rates, ops.span, &ctx.noise)?;
        let select: f64 = ts.rng.random();
        sample_jump(dp, epsilon, &weights, || select)?
    } else {
        JumpDecision::None
    };
    match decision {
        JumpDecision::Channel(k) => {
            apply_jump(&mut ts.phi, k, &ctx.noise)?;
            let ch = &ctx.noise.channels[k];
            ts.jump_log.push(JumpEvent {
                step: ts.step,
                time: ops.rate_time,
                channel: k,
                kind: ch.kind,
                site: ch.site,
            });
        }
        JumpDecision::None => {
            ts.phi.normalize()?;
        }
    }
    ts.mu = martingale_step(ts.mu, decision, &rates, ops.span, &ctx.noise, ctx.mutation)?;
    ts.step += 1;
    Ok(StepOutcome {
        jump_probability: dp,
        decision,
    })
}

fn measure<B: TrajectoryBackend>(state: &mut B, ctx: &SimulationContext) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ctx.values_per_sample());
    for obs in &ctx.observables {
        let op = obs.operator();
        for &site in &ctx.sites {
            out.push(state.expect(site, &op)?);
        }
    }
    Ok(out)
}

/// Physical state and weight at `jδt` reconstructed from `Φ((j−1)δt)`.
fn corrected_sample<B: TrajectoryBackend>(
    ts: &TrajectoryState<B>,
    ctx: &SimulationContext,
) -> Result<(Vec<f64>, f64)> {
    let ops = StepOperators::sampling_correction(ts.step, ctx.dt);
    let rates = ctx.noise.rates_at(ops.rate_time);
    let mut copy = ts.phi.clone();
    copy.normalize()?;
    no_jump_step(&mut copy, &ops, &rates, ctx)?;
    copy.normalize()?;
    let values = measure(&mut copy, ctx)?;
    Ok((values, ts.mu * (rates.shift * ops.span).exp()))
}

/// Runs trajectory `index` from `initial` and records the sampled observables.
pub fn run_trajectory_from<B: TrajectoryBackend>(
    initial: B,
    ctx: &SimulationContext,
    index: u64,
) -> Result<TrajectoryRecord> {
    for &site in &ctx.sites {
        if site >= initial.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "observable site {site} outside a chain of {}",
                initial.n_sites()
            )));
        }
    }
    let mut ts = TrajectoryState::new(initial, ctx.rng_for(index));
    ts.phi.normalize()?;
    let steps = ctx.sample_steps();
    let mut next_sample = steps.iter().copied().peekable();
    let mut record = TrajectoryRecord {
        index,
        times: Vec::with_capacity(steps.len()),
        mu: Vec::with_capacity(steps.len()),
        values: Vec::with_capacity(steps.len()),
        jumps: Vec::new(),
        max_bond_dim: ts.phi.max_bond_dim(),
        coarse_step_warning: false,
    };
    let push = |record: &mut TrajectoryRecord, step: usize, values: Vec<f64>, mu: f64| {
        record.times.push(step as f64 * ctx.dt);
        record.values.push(values);
        record.mu.push(mu);
    };

    if next_sample.peek() == Some(&0) {
        next_sample.next();
        let values = measure(&mut ts.phi.clone(), ctx)?;
        push(&mut record, 0, values, 1.0);
    }
    for j in 0..=ctx.n_steps {
        let second_order = ctx.trotter == TrotterOrder::Second;
        if second_order && j > 0 && j < ctx.n_steps && next_sample.peek() == Some(&j) {
            next_sample.next();
            let (values, mu) = corrected_sample(&ts, ctx)?;
            push(&mut record, j, values, mu);
        }
        let outcome = advance(&mut ts, ctx)?;
        if outcome.jump_probability > COARSE_STEP_WARNING && !record.coarse_step_warning {
            warn!(
                "trajectory {index}: jump probability {:.3} at step {j} exceeds {COARSE_STEP_WARNING}; reduce dt",
                outcome.jump_probability
            );
            record.coarse_step_warning = true;
        }
        record.max_bond_dim = record.max_bond_dim.max(ts.phi.max_bond_dim());
        if (j == ctx.n_steps || !second_order) && j > 0 && next_sample.peek() == Some(&j) {
            next_sample.next();
            let mut copy = ts.phi.clone();
            let values = measure(&mut copy, ctx)?;
            push(&mut record, j, values, ts.mu);
        }
    }
    record.jumps = ts.jump_log;
    Ok(record)
}

/// Tensor-network trajectory from `|0…0⟩`.
pub fn run_trajectory(ctx: &SimulationContext, index: u64) -> Result<TrajectoryRecord> {
    let initial = MpsState::from_product_state(&vec![0; ctx.n_sites()])?;
    run_trajectory_from(initial, ctx, index)
}

/// Deterministic product `F_n ⋯ F_0 ψ` without jumps or renormalization.
pub fn propagate_no_jump<B: TrajectoryBackend>(state: &mut B, ctx: &SimulationContext) -> Result<()> {
    for j in 0..=ctx.n_steps {
        let ops = StepOperators::for_step(j, ctx.n_steps, ctx.dt, ctx.trotter);
        let rates = ctx.noise.rates_at(ops.rate_time);
        no_jump_step(state, &ops, &rates, ctx)?;
    }
    Ok(())
}
