//! Parallel trajectory runs and martingale-weighted statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::MpsState;
use crate::noise::ChannelKind;
use crate::oracle::{integrate_master, DenseDensityMatrix, DenseState, MasterOptions};
use crate::tjm::{run_trajectory_from, JumpEvent, Observable, SimulationContext, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    /// Matrix product state trajectories.
    Tjm,
    /// State-vector trajectories with the same stepper.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub workers: usize,
    pub mode: TrajectoryMode,
    /// Keep every trajectory record in the result.
    pub keep_records: bool,
    /// Steps per jump-histogram bin.
    pub jump_bin_steps: usize,
}

impl EnsembleOptions {
    pub fn new(n_traj: usize) -> Self {
        Self {
            n_traj,
            workers: 1,
            mode: TrajectoryMode::Tjm,
            keep_records: false,
            jump_bin_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFault {
    pub index: u64,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub observable: Observable,
    pub site: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpHistogram {
    pub kinds: Vec<ChannelKind>,
    /// Start time of every bin.
    pub bin_times: Vec<f64>,
    pub bin_steps: usize,
    /// `counts[bin][kind]`: trajectories with at least one jump of that kind in the bin.
    pub counts: Vec<Vec<usize>>,
    /// Trajectories with at least one jump of any kind in the bin.
    pub totals: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub observables: Vec<ObservableSeries>,
    pub mu_mean: Vec<f64>,
    pub mu_var: Vec<f64>,
    pub mu_stderr: Vec<f64>,
    pub jumps: JumpHistogram,
    /// Trajectories that completed and enter the statistics.
    pub n_traj: usize,
    pub faults: Vec<TrajectoryFault>,
    pub max_bond_dim: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    pub fn is_complete(&self) -> bool {
        self.faults.is_empty()
    }

    pub fn series(&self, observable: Observable, site: usize) -> Option<&ObservableSeries> {
        self.observables
            .iter()
            .find(|s| s.observable == observable && s.site == site)
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Mean of `μ_i v_i` and the standard error of that mean.
pub fn weighted_observable(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("weighted observable needs at least one sample"));
    }
    let mut acc = Welford::default();
    for &(mu, v) in samples {
        acc.push(mu * v);
    }
    Ok((acc.mean, acc.stderr()))
}

pub fn jump_histogram(
    logs: &[&[JumpEvent]],
    kinds: &[ChannelKind],
    n_steps: usize,
    dt: f64,
    bin_steps: usize,
) -> JumpHistogram {
    let bin_steps = bin_steps.max(1);
    let n_bins = (n_steps + 1).div_ceil(bin_steps);
    let mut counts = vec![vec![0usize; kinds.len()]; n_bins];
    let mut totals = vec![0usize; n_bins];
    for log in logs {
        let mut seen = vec![vec![false; kinds.len()]; n_bins];
        let mut seen_any = vec![false; n_bins];
        for ev in log.iter() {
            let bin = (ev.step / bin_steps).min(n_bins - 1);
            if let Some(k) = kinds.iter().position(|&kind| kind == ev.kind) {
                if !seen[bin][k] {
                    seen[bin][k] = true;
                    counts[bin][k] += 1;
                }
            }
            if !seen_any[bin] {
                seen_any[bin] = true;
                totals[bin] += 1;
            }
        }
    }
    JumpHistogram {
        kinds: kinds.to_vec(),
        bin_times: (0..n_bins).map(|b| (b * bin_steps) as f64 * dt).collect(),
        bin_steps,
        counts,
        totals,
    }
}

/// Reduces trajectory records, in the order given, into ensemble statistics.
pub fn aggregate(
    ctx: &SimulationContext,
    records: Vec<TrajectoryRecord>,
    faults: Vec<TrajectoryFault>,
    options: &EnsembleOptions,
) -> EnsembleResult {
    let times = ctx.sample_times();
    let n_samples = times.len();
    let width = ctx.values_per_sample();
    let mut values = vec![Welford::default(); n_samples * width];
    let mut mu = vec![Welford::default(); n_samples];
    let mut max_bond = 0;
    for rec in &records {
        max_bond = max_bond.max(rec.max_bond_dim);
        for (s, (&m, row)) in rec.mu.iter().zip(&rec.values).enumerate() {
            mu[s].push(m);
            for (k, &v) in row.iter().enumerate() {
                values[s * width + k].push(m * v);
            }
        }
    }
    let mut observables = Vec::with_capacity(width);
    for (o, &obs) in ctx.observables.iter().enumerate() {
        for (i, &site) in ctx.sites.iter().enumerate() {
            let k = o * ctx.sites.len() + i;
            observables.push(ObservableSeries {
                observable: obs,
                site,
                mean: (0..n_samples).map(|s| values[s * width + k].mean).collect(),
                stderr: (0..n_samples).map(|s| values[s * width + k].stderr()).collect(),
            });
        }
    }
    let logs: Vec<&[JumpEvent]> = records.iter().map(|r| r.jumps.as_slice()).collect();
    let jumps = jump_histogram(&logs, &ctx.noise.kinds, ctx.n_steps, ctx.dt, options.jump_bin_steps);
    EnsembleResult {
        times,
        observables,
        mu_mean: mu.iter().map(|w| w.mean).collect(),
        mu_var: mu.iter().map(|w| w.variance()).collect(),
        mu_stderr: mu.iter().map(|w| w.stderr()).collect(),
        jumps,
        n_traj: records.len(),
        faults,
        max_bond_dim: max_bond,
        records: if options.keep_records { records } else { Vec::new() },
    }
}

/// Runs `n_traj` trajectories on a pool of `workers` threads. Trajectory `i`
/// draws from stream `i` of the base seed, and results are merged by index, so
/// the output does not depend on the worker count.
pub fn run_ensemble(ctx: &SimulationContext, options: &EnsembleOptions) -> Result<EnsembleResult> {
    if options.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<TrajectoryRecord>> = match options.mode {
        TrajectoryMode::Tjm => {
            let initial = MpsState::from_product_state(&vec![0; ctx.n_sites()])?;
            pool.install(|| {
                (0..options.n_traj as u64)
                    .into_par_iter()
                    .map(|i| run_trajectory_from(initial.clone(), ctx, i))
                    .collect()
            })
        }
        TrajectoryMode::Dense => {
            let template = DenseState::ground_product(ctx)?;
            pool.install(|| {
                (0..options.n_traj as u64)
                    .into_par_iter()
                    .map(|i| run_trajectory_from(template.clone(), ctx, i))
                    .collect()
            })
        }
    };
    let mut records = Vec::with_capacity(outcomes.len());
    let mut faults = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(error) => {
                log::error!("trajectory {i} (seed {}) failed: {error}", ctx.base_seed);
                faults.push(TrajectoryFault {
                    index: i as u64,
                    seed: ctx.base_seed,
                    error,
                });
            }
        }
    }
    if records.is_empty() {
        return Err(faults.swap_remove(0).error);
    }
    Ok(aggregate(ctx, records, faults, options))
}

/// Dense master-equation solution from `|0…0⟩` laid out like an ensemble
/// result with zero standard errors and `μ ≡ 1`.
pub fn run_master(ctx: &SimulationContext, substeps: usize) -> Result<EnsembleResult> {
    let n = ctx.n_sites();
    let h = ctx.hamiltonian.to_dense()?.as_square()?;
    let mut psi = nalgebra::DVector::zeros(1 << n);
    psi[0] = crate::tensor::C64::new(1.0, 0.0);
    let rho0 = DenseDensityMatrix::pure(&psi, n)?;
    let opts = MasterOptions {
        substeps,
        sample_stride: ctx.sample_stride.max(1),
    };
    let sol = integrate_master(&h, &ctx.noise, &rho0, ctx.dt, ctx.n_steps, opts)?;
    let mut observables = Vec::new();
    for &obs in &ctx.observables {
        let op = obs.operator();
        for &site in &ctx.sites {
            observables.push(ObservableSeries {
                observable: obs,
                site,
                mean: sol.states.iter().map(|s| s.expect(site, &op)).collect(),
                stderr: vec![0.0; sol.states.len()],
            });
        }
    }
    let samples = sol.times.len();
    Ok(EnsembleResult {
        times: sol.times,
        observables,
        mu_mean: vec![1.0; samples],
        mu_var: vec![0.0; samples],
        mu_stderr: vec![0.0; samples],
        jumps: jump_histogram(&[], &ctx.noise.kinds, ctx.n_steps, ctx.dt, 1),
        n_traj: 0,
        faults: Vec::new(),
        max_bond_dim: 0,
        records: Vec::new(),
    })
}
