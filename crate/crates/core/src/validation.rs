//! Executable acceptance checks. Each check binds a solver path to an
//! independent oracle and reports an observed figure against its bound;
//! failures are reported, never raised.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::Serialize;

use crate::ensemble::{run_ensemble, EnsembleOptions, EnsembleResult, TrajectoryMode};
use crate::error::Result;
use crate::mpo::MpOperator;
use crate::mps::MpsState;
use crate::noise::{shift_at, ChannelKind, NoiseModel, RateSchedule};
use crate::oracle::{embed_site, integrate_master, tfi_dense, DenseDensityMatrix, MasterOptions};
use crate::tdvp::{mpo_expectation, tdvp_sweep, SweepMode};
use crate::tensor::{expm_dense, C64};
use crate::tjm::{propagate_no_jump, Mutation, Observable, SimulationContext, StepOperators, TrotterOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Chains of at most three sites and at most 500 trajectories.
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub id: &'static str,
    pub title: &'static str,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
    pub runtime_secs: f64,
    pub detail: String,
}

impl CheckReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{} {:<4} {:<34} observed {:<11.4e} bound {:<11.4e} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.observed,
            self.bound,
            self.runtime_secs,
            self.detail
        )
    }

    fn errored(id: &'static str, title: &'static str, bound: f64, started: Instant, error: crate::Error) -> Self {
        Self {
            id,
            title,
            observed: f64::NAN,
            bound,
            passed: false,
            runtime_secs: started.elapsed().as_secs_f64(),
            detail: format!("error: {error}"),
        }
    }
}

pub const CHECK_IDS: [&str; 10] = ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10"];

const SEED: u64 = 20_240_917;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn finish(
    id: &'static str,
    title: &'static str,
    bound: f64,
    started: Instant,
    outcome: Result<(f64, bool, String)>,
) -> CheckReport {
    match outcome {
        Ok((observed, passed, detail)) => CheckReport {
            id,
            title,
            observed,
            bound,
            passed,
            runtime_secs: started.elapsed().as_secs_f64(),
            detail,
        },
        Err(e) => CheckReport::errored(id, title, bound, started, e),
    }
}

fn within_runtime(started: Instant, limit: Duration) -> bool {
    started.elapsed() <= limit
}

fn ground_density(n: usize) -> Result<DenseDensityMatrix> {
    let mut psi = DVector::zeros(1 << n);
    psi[0] = C64::new(1.0, 0.0);
    DenseDensityMatrix::pure(&psi, n)
}

fn dephasing(n: usize, schedule: RateSchedule) -> Result<NoiseModel> {
    NoiseModel::uniform(n, &[(ChannelKind::Dephasing, schedule)])
}

fn tfi_context(n: usize, noise: NoiseModel, dt: f64, n_steps: usize) -> Result<SimulationContext> {
    let mut ctx = SimulationContext::new(MpOperator::build_tfi(n, 1.0, 0.5)?, noise, dt, n_steps)?;
    ctx.base_seed = SEED;
    Ok(ctx)
}

/// Composite Simpson rule for `∫_0^t γ(s) ds`.
fn integrated_rate(schedule: &RateSchedule, t: f64) -> f64 {
    let panels = 2 * ((t / 1e-4).ceil() as usize).max(1);
    let h = t / panels as f64;
    let mut acc = schedule.gamma_at(0.0) + schedule.gamma_at(t);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * schedule.gamma_at(k as f64 * h);
    }
    acc * h / 3.0
}

/// Single qubit under benchmark dephasing, `ρ₀ = |+⟩⟨+|`: the coherence must
/// follow `½·exp(−2c²∫γ)` and grow exactly where `γ < 0`.
pub fn analytic_dephasing(_scale: Scale) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let schedule = RateSchedule::benchmark();
        let noise = dephasing(1, schedule.clone())?;
        let c2 = noise.channels[0].norm_factor.powi(2);
        let h = MpOperator::build_tfi(1, 1.0, 0.0)?.to_dense()?.as_square()?;
        let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho0 = DenseDensityMatrix::pure(&DVector::from_vec(vec![amp, amp]), 1)?;
        let (dt, steps) = (0.001, 2000);
        let sol = integrate_master(&h, &noise, &rho0, dt, steps, MasterOptions::default())?;
        let mut max_err: f64 = 0.0;
        for (t, state) in sol.times.iter().zip(&sol.states) {
            let exact = 0.5 * (-2.0 * c2 * integrated_rate(&schedule, *t)).exp();
            max_err = max_err.max((state.rho[(0, 1)] - C64::new(exact, 0.0)).norm());
        }
        let mut mismatched = 0;
        let mut revivals = 0;
        for k in 0..sol.times.len() - 1 {
            let (a, b) = (sol.times[k], sol.times[k + 1]);
            let (ga, gb) = (schedule.gamma_at(a), schedule.gamma_at(b));
            if ga * gb <= 0.0 {
                continue;
            }
            let grows = sol.states[k + 1].rho[(0, 1)].norm() > sol.states[k].rho[(0, 1)].norm();
            if grows {
                revivals += 1;
            }
            if grows != (ga < 0.0) {
                mismatched += 1;
            }
        }
        let fast = within_runtime(started, Duration::from_secs(5));
        let passed = max_err <= 2e-3 && mismatched == 0 && revivals > 0 && fast;
        Ok((
            max_err,
            passed,
            format!("revival steps {revivals}, sign mismatches {mismatched}, trace drift {:.1e}", sol.trace_drift),
        ))
    })();
    finish("C1", "analytic dephasing oracle", 2e-3, started, outcome)
}

/// `max_t |mean(μ_t) − 1| / stderr(μ_t)` and whether `μ` stayed exactly
/// constant over every sample interval with `C_t = 0`.
fn martingale_statistics(ctx: &SimulationContext, result: &EnsembleResult) -> (f64, usize, usize) {
    let mut worst: f64 = 0.0;
    for (mean, err) in result.mu_mean.iter().zip(&result.mu_stderr) {
        let dev = (mean - 1.0).abs();
        let z = if *err > 0.0 {
            dev / err
        } else if dev <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    let times = &result.times;
    let quiet: Vec<bool> = (0..times.len().saturating_sub(1))
        .map(|k| {
            // every rate evaluation that can touch μ between the two samples
            let (a, b) = (times[k] - ctx.dt, times[k + 1]);
            let probes = ((b - a) / (ctx.dt / 8.0)).ceil() as usize;
            (0..=probes).all(|p| {
                let t = (a + p as f64 * (b - a) / probes as f64).max(0.0);
                ctx.noise.rates_at(t).shift == 0.0
            })
        })
        .collect();
    let mut constant_intervals = 0;
    let mut violations = 0;
    for rec in &result.records {
        for (k, &q) in quiet.iter().enumerate() {
            if q {
                constant_intervals += 1;
                if rec.mu[k] != rec.mu[k + 1] {
                    violations += 1;
                }
            }
        }
    }
    (worst, constant_intervals, violations)
}

/// Benchmark dephasing on two sites with state-vector trajectories:
/// `E[μ_t] = 1` within 4 standard errors and `μ` frozen where `C_t = 0`.
pub fn martingale_mean(scale: Scale, mutation: Option<Mutation>) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        // quick scale samples more coarsely so that the first sample after
        // the rate turns negative already expects dozens of jumps
        let (n_traj, steps, stride) = match scale {
            Scale::Quick => (500, 1000, 50),
            Scale::Full => (2000, 2000, 10),
        };
        let mut ctx = tfi_context(2, dephasing(2, RateSchedule::benchmark())?, 0.001, steps)?;
        ctx.sample_stride = stride;
        ctx.mutation = mutation;
        let mut opts = EnsembleOptions::new(n_traj);
        opts.mode = TrajectoryMode::Dense;
        opts.workers = workers();
        opts.keep_records = true;
        let result = run_ensemble(&ctx, &opts)?;
        let (worst, intervals, violations) = martingale_statistics(&ctx, &result);
        let fast = within_runtime(started, Duration::from_secs(300));
        let passed = worst <= 4.0 && violations == 0 && intervals > 0 && result.is_complete() && fast;
        Ok((
            worst,
            passed,
            format!(
                "{n_traj} trajectories, {} samples; mu constant on {intervals} quiet intervals with {violations} violations",
                result.times.len()
            ),
        ))
    })();
    finish("C2", "martingale mean (max z-score)", 4.0, started, outcome)
}

/// Everything needed to compare an MPS ensemble against the master equation.
pub struct OracleComparison {
    pub ctx: SimulationContext,
    pub ensemble: EnsembleResult,
    pub reference: EnsembleResult,
}

fn equivalence_run(scale: Scale, schedule: RateSchedule) -> Result<OracleComparison> {
    let (n_traj, steps) = match scale {
        Scale::Quick => (300, 200),
        Scale::Full => (1000, 400),
    };
    let mut ctx = tfi_context(3, dephasing(3, schedule)?, 0.005, steps)?;
    ctx.chi_max = 8;
    ctx.sample_stride = 4;
    let mut opts = EnsembleOptions::new(n_traj);
    opts.workers = workers();
    opts.keep_records = true;
    let ensemble = run_ensemble(&ctx, &opts)?;
    let reference = crate::ensemble::run_master(&ctx, crate::oracle::DEFAULT_SUBSTEPS)?;
    Ok(OracleComparison { ctx, ensemble, reference })
}

/// `max |E[μ⟨X⟩] − Tr(Xρ)| / max(0.05, 3·stderr)` over sites and times.
fn equivalence_score(cmp: &OracleComparison) -> (f64, f64, String) {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    let mut at = String::new();
    for (series, exact) in cmp.ensemble.observables.iter().zip(&cmp.reference.observables) {
        for k in 0..series.mean.len() {
            let dev = (series.mean[k] - exact.mean[k]).abs();
            let allowed = f64::max(0.05, 3.0 * series.stderr[k]);
            if dev / allowed > worst_ratio {
                worst_ratio = dev / allowed;
                at = format!("site {} t={:.3} stderr {:.3}", series.site, cmp.ensemble.times[k], series.stderr[k]);
            }
            worst_dev = worst_dev.max(dev);
        }
    }
    (worst_ratio, worst_dev, at)
}

fn equivalence_check(
    id: &'static str,
    title: &'static str,
    scale: Scale,
    schedule: RateSchedule,
) -> (CheckReport, Option<OracleComparison>) {
    let started = Instant::now();
    let run = equivalence_run(scale, schedule);
    match run {
        Ok(cmp) => {
            let (ratio, dev, at) = equivalence_score(&cmp);
            let fast = within_runtime(started, Duration::from_secs(900));
            let passed = ratio <= 1.0 && cmp.ensemble.is_complete() && fast;
            let detail = format!("{} trajectories, max |dev| {dev:.4} (worst at {at})", cmp.ensemble.n_traj);
            (finish(id, title, 1.0, started, Ok((ratio, passed, detail))), Some(cmp))
        }
        Err(e) => (CheckReport::errored(id, title, 1.0, started, e), None),
    }
}

pub fn oracle_equivalence_non_markovian(scale: Scale) -> (CheckReport, Option<OracleComparison>) {
    equivalence_check("C3", "oracle equivalence, non-Markovian", scale, RateSchedule::benchmark())
}

pub fn oracle_equivalence_markovian(scale: Scale) -> (CheckReport, Option<OracleComparison>) {
    equivalence_check("C4", "oracle equivalence, Markovian", scale, RateSchedule::constant(8.24))
}

/// Terminal error of the no-jump product against `exp(−iH_eff T)|0…0⟩`.
pub fn no_jump_error(order: TrotterOrder, n_steps: usize) -> Result<f64> {
    let n = 2;
    let total = 1.0;
    let noise = NoiseModel::uniform(
        n,
        &[
            (ChannelKind::Excitation, RateSchedule::constant(0.5)),
            (ChannelKind::Relaxation, RateSchedule::constant(3.0)),
        ],
    )?;
    let h = tfi_dense(n, 1.0, 0.5)?;
    let mut heff = h.clone();
    for ch in &noise.channels {
        let rate = noise.schedules[ch.schedule].gamma_at(0.0);
        heff -= embed_site(n, ch.site, &ch.weight_operator()) * C64::new(0.0, 0.5 * rate);
    }
    let exact = expm_dense(&heff, C64::new(0.0, -total)).column(0).into_owned();
    let mut ctx = tfi_context(n, noise, total / n_steps as f64, n_steps)?;
    ctx.chi_max = 4;
    ctx.trotter = order;
    let mut state = MpsState::from_product_state(&[0, 0])?;
    propagate_no_jump(&mut state, &ctx)?;
    let got = DVector::from_column_slice(state.to_dense()?.data());
    Ok((got - exact).norm())
}

/// Halving `δt` must shrink the no-jump error by a factor in `[3, 5]`.
pub fn trotter_order(_scale: Scale, order: TrotterOrder) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let coarse = no_jump_error(order, 20)?;
        let fine = no_jump_error(order, 40)?;
        let finer = no_jump_error(order, 80)?;
        let ratio = coarse / fine;
        let next = fine / finer;
        let passed = (3.0..=5.0).contains(&ratio) && (3.0..=5.0).contains(&next);
        Ok((ratio, passed, format!("errors {coarse:.3e} {fine:.3e} {finer:.3e}; next ratio {next:.3}")))
    })();
    finish("C5", "Trotter order (error ratio)", 4.0, started, outcome)
}

/// Closed-system TDVP against dense unitary evolution for `N ≤ 4`.
pub fn tdvp_exactness(_scale: Scale) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let (dt, steps) = (0.01, 100);
        let total = dt * steps as f64;
        let mut state_err: f64 = 0.0;
        let mut norm_drift: f64 = 0.0;
        let mut energy_drift: f64 = 0.0;
        for n in 2..=4 {
            let mpo = MpOperator::build_tfi(n, 1.0, 0.5)?;
            let h = tfi_dense(n, 1.0, 0.5)?;
            let u = expm_dense(&h, C64::new(0.0, -dt));
            let chi = 1 << (n / 2);
            // generic amplitudes so that every bond starts at full dimension
            let mut psi = DVector::<C64>::from_fn(1 << n, |k, _| {
                let x = k as f64;
                C64::new((1.3 * x + 0.2).cos(), (0.7 * x * x + 0.1).sin())
            });
            psi /= C64::new(psi.norm(), 0.0);
            let mut state = MpsState::from_dense(psi.as_slice(), n)?;
            if state.bond_dims().iter().max() != Some(&chi) {
                return Err(crate::Error::InvalidArgument("initial state is not full rank".into()));
            }
            let e0 = mpo_expectation(&state, &mpo)?.re;
            for _ in 0..steps {
                tdvp_sweep(&mut state, &mpo, dt, SweepMode::TwoSite, chi, 0.0)?;
                psi = &u * psi;
                let got = DVector::from_column_slice(state.to_dense()?.data());
                state_err = state_err.max((got - &psi).norm());
            }
            norm_drift = norm_drift.max((state.norm_squared() - 1.0).abs() / total);
            energy_drift = energy_drift.max((mpo_expectation(&state, &mpo)?.re - e0).abs() / total);

            // one-site sweeps from the entangled state
            let e1 = mpo_expectation(&state, &mpo)?.re;
            for _ in 0..steps {
                tdvp_sweep(&mut state, &mpo, dt, SweepMode::OneSite, chi, 0.0)?;
            }
            norm_drift = norm_drift.max((state.norm_squared() - 1.0).abs() / total);
            energy_drift = energy_drift.max((mpo_expectation(&state, &mpo)?.re - e1).abs() / total);
        }
        let observed = state_err.max(norm_drift).max(energy_drift);
        Ok((
            observed,
            observed <= 1e-8,
            format!("state {state_err:.2e}, norm drift {norm_drift:.2e}/t, energy drift {energy_drift:.2e}/t"),
        ))
    })();
    finish("C6", "TDVP exactness", 1e-8, started, outcome)
}

/// Completeness of the normalized channel set and trace preservation of the
/// master equation through negative-rate intervals.
pub fn completeness_and_trace(_scale: Scale) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let b = RateSchedule::benchmark();
        let mixes: Vec<Vec<(ChannelKind, RateSchedule)>> = vec![
            vec![(ChannelKind::Dephasing, b.clone())],
            vec![(ChannelKind::Excitation, b.clone()), (ChannelKind::Relaxation, b.clone())],
            ChannelKind::ALL.iter().map(|&k| (k, b.clone())).collect(),
        ];
        let mut completeness: f64 = 0.0;
        for mix in &mixes {
            for n in 1..=6 {
                let model = NoiseModel::uniform(n, mix)?;
                completeness = completeness.max(model.completeness_error());
                if n <= 4 {
                    let dim = 1 << n;
                    let mut sum = nalgebra::DMatrix::<C64>::zeros(dim, dim);
                    for ch in &model.channels {
                        sum += embed_site(n, ch.site, &ch.weight_operator());
                    }
                    sum -= nalgebra::DMatrix::<C64>::identity(dim, dim);
                    completeness = completeness.max(sum.iter().map(|x| x.norm()).fold(0.0, f64::max));
                }
            }
        }
        let mut drift: f64 = 0.0;
        for (n, mix) in [(3, &mixes[0]), (2, &mixes[1]), (2, &mixes[2])] {
            let noise = NoiseModel::uniform(n, mix)?;
            let h = tfi_dense(n, 1.0, 0.5)?;
            let opts = MasterOptions {
                substeps: 10,
                sample_stride: 50,
            };
            let sol = integrate_master(&h, &noise, &ground_density(n)?, 0.005, 400, opts)?;
            drift = drift.max(sol.trace_drift);
        }
        Ok((
            drift,
            drift <= 1e-8 && completeness <= 1e-12,
            format!("completeness error {completeness:.2e} (bound 1e-12)"),
        ))
    })();
    finish("C7", "completeness and trace drift", 1e-8, started, outcome)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub const JUMP_BIN_STEPS: usize = 10;

/// Per-bin fraction of trajectories with a jump against the binomial
/// expectation, and its correlation with the shifted rate.
pub fn jump_statistics_from(cmp: &OracleComparison, started: Instant) -> CheckReport {
    let outcome = (|| {
        let ctx = &cmp.ctx;
        let logs: Vec<&[crate::tjm::JumpEvent]> = cmp.ensemble.records.iter().map(|r| r.jumps.as_slice()).collect();
        let hist = crate::ensemble::jump_histogram(&logs, &ctx.noise.kinds, ctx.n_steps, ctx.dt, JUMP_BIN_STEPS);
        let m = cmp.ensemble.n_traj as f64;
        let schedule = &ctx.noise.schedules[0];
        let mut worst: f64 = 0.0;
        let mut fractions = Vec::new();
        let mut mean_rates = Vec::new();
        for (bin, &count) in hist.totals.iter().enumerate() {
            let first = bin * JUMP_BIN_STEPS;
            let last = ((bin + 1) * JUMP_BIN_STEPS).min(ctx.n_steps + 1);
            let mut survive = 1.0;
            let mut rate_sum = 0.0;
            for step in first..last {
                let ops = StepOperators::for_step(step, ctx.n_steps, ctx.dt, ctx.trotter);
                let gamma = schedule.gamma_at(ops.rate_time);
                let r = gamma + shift_at(&[gamma]);
                // dephasing: Σ_k c²‖L_k ψ‖² = 1 for every state
                survive *= (-r * ops.span).exp();
                rate_sum += r;
            }
            let p = 1.0 - survive;
            let sigma = (m * p * (1.0 - p)).sqrt();
            let dev = (count as f64 - m * p).abs();
            let z = if sigma > 0.0 { dev / sigma } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            fractions.push(count as f64 / m);
            mean_rates.push(rate_sum / (last - first) as f64);
        }
        let corr = pearson(&fractions, &mean_rates);
        Ok((
            worst,
            worst <= 4.0 && corr > 0.9,
            format!("{} bins of {JUMP_BIN_STEPS} steps, correlation with r(t) {corr:.3}", hist.totals.len()),
        ))
    })();
    finish("C8", "jump statistics (max binomial z)", 4.0, started, outcome)
}

pub fn jump_statistics(scale: Scale) -> CheckReport {
    let started = Instant::now();
    match equivalence_run(scale, RateSchedule::benchmark()) {
        Ok(cmp) => jump_statistics_from(&cmp, started),
        Err(e) => CheckReport::errored("C8", "jump statistics (max binomial z)", 4.0, started, e),
    }
}

/// Time average of the mean difference between two site curves, with its
/// standard error taken across trajectories.
fn curve_gap(result: &EnsembleResult, a: usize, b: usize) -> (f64, f64) {
    let k_a = result.observables.iter().position(|s| s.site == a && s.observable == Observable::X);
    let k_b = result.observables.iter().position(|s| s.site == b && s.observable == Observable::X);
    let (Some(k_a), Some(k_b)) = (k_a, k_b) else {
        return (f64::NAN, f64::NAN);
    };
    let per_traj: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|rec| {
            let s: f64 = rec.values.iter().zip(&rec.mu).map(|(row, mu)| mu * (row[k_a] - row[k_b])).sum();
            (1.0, s / rec.values.len() as f64)
        })
        .collect();
    crate::ensemble::weighted_observable(&per_traj).unwrap_or((f64::NAN, f64::NAN))
}

/// Time average of the site-averaged curve after the first quarter of the
/// run, with its standard error across trajectories.
pub fn long_time_offset(result: &EnsembleResult) -> (f64, f64) {
    let start = result.times.len() / 4;
    let per_traj: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|rec| {
            let mut acc = 0.0;
            let mut count = 0;
            for (row, mu) in rec.values[start..].iter().zip(&rec.mu[start..]) {
                acc += mu * row.iter().sum::<f64>() / row.len() as f64;
                count += 1;
            }
            (1.0, acc / count as f64)
        })
        .collect();
    crate::ensemble::weighted_observable(&per_traj).unwrap_or((f64::NAN, f64::NAN))
}

pub struct FigureRun {
    pub label: &'static str,
    pub result: EnsembleResult,
}

fn figure_mix(label: &str) -> Vec<(ChannelKind, RateSchedule)> {
    let b = RateSchedule::benchmark();
    let m = RateSchedule::constant(8.24);
    match label {
        "mdep" => vec![(ChannelKind::Dephasing, m)],
        "nmdep" => vec![(ChannelKind::Dephasing, b)],
        "nmexcnmrel" => vec![(ChannelKind::Excitation, b.clone()), (ChannelKind::Relaxation, b)],
        // Markovian excitation with non-Markovian relaxation
        "mexcnmrel" => vec![(ChannelKind::Excitation, m), (ChannelKind::Relaxation, b)],
        other => panic!("unknown figure configuration {other}"),
    }
}

/// Figure configurations on `n` sites at `δt = 0.005`, `χ = 4`, as
/// `(label, trajectories)` pairs.
pub fn figure_runs_with(n: usize, runs: &[(&'static str, usize)], steps: usize) -> Result<Vec<FigureRun>> {
    let mut out = Vec::new();
    for &(label, count) in runs {
        let mut ctx = tfi_context(n, NoiseModel::uniform(n, &figure_mix(label))?, 0.005, steps)?;
        ctx.chi_max = 4;
        ctx.sample_stride = 4;
        let mut opts = EnsembleOptions::new(count);
        opts.workers = workers();
        opts.keep_records = true;
        out.push(FigureRun {
            label,
            result: run_ensemble(&ctx, &opts)?,
        });
    }
    Ok(out)
}

/// Full scale: all four paper configurations on five sites. Quick scale keeps
/// the pairs that 500 trajectories on three sites can resolve.
pub fn figure_runs(scale: Scale) -> Result<Vec<FigureRun>> {
    match scale {
        Scale::Quick => figure_runs_with(3, &[("mdep", 500), ("mexcnmrel", 500)], 300),
        Scale::Full => figure_runs_with(
            5,
            &[("mdep", 1000), ("nmdep", 1500), ("nmexcnmrel", 4000), ("mexcnmrel", 3000)],
            400,
        ),
    }
}

/// Ratio of the mean boundary-bulk curve distance to the mean distance among
/// bulk sites (for three sites: between the two mirror-image boundaries).
fn edge_bulk_ratio(run: &FigureRun) -> (f64, String) {
    let n = run.result.observables.len();
    let boundary = [0, n - 1];
    let bulk: Vec<usize> = (1..n - 1).collect();
    let mut edge = Vec::new();
    for &e in &boundary {
        for &k in &bulk {
            edge.push(curve_gap(&run.result, e, k).0.abs());
        }
    }
    let mut inner = Vec::new();
    for (i, &a) in bulk.iter().enumerate() {
        for &b in &bulk[i + 1..] {
            inner.push(curve_gap(&run.result, a, b).0.abs());
        }
    }
    if inner.is_empty() {
        inner.push(curve_gap(&run.result, boundary[0], boundary[1]).0.abs());
    }
    let mean_edge = edge.iter().sum::<f64>() / edge.len() as f64;
    let mean_inner = inner.iter().sum::<f64>() / inner.len() as f64;
    let mid = &run.result.observables[n / 2].mean;
    let peak = mid.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let tail_start = mid.len() * 3 / 4;
    let tail = mid[tail_start..].iter().map(|x| x.abs()).sum::<f64>() / (mid.len() - tail_start) as f64;
    let ratio = if tail < peak { mean_edge / mean_inner.max(1e-300) } else { 0.0 };
    (
        ratio,
        format!(
            "{}: boundary-bulk {mean_edge:.4} vs bulk {mean_inner:.4}, peak {peak:.3} tail {tail:.3}",
            run.label
        ),
    )
}

/// Boundary sites separate from the bulk in the dephasing runs, and each
/// excitation/relaxation mix settles at a long-time offset more than three
/// standard errors away from every other run.
pub fn figure_reproduction(scale: Scale) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let runs = figure_runs(scale)?;
        let mut details = Vec::new();
        let mut margin = f64::INFINITY;
        for run in runs.iter().filter(|r| r.label.ends_with("dep")) {
            let (ratio, line) = edge_bulk_ratio(run);
            margin = margin.min(ratio);
            details.push(line);
        }
        let offsets: Vec<(f64, f64)> = runs.iter().map(|r| long_time_offset(&r.result)).collect();
        let mut weakest = f64::INFINITY;
        for (i, a) in runs.iter().enumerate() {
            if a.label.ends_with("dep") {
                continue;
            }
            for (j, b) in runs.iter().enumerate() {
                if i == j || (!b.label.ends_with("dep") && j < i) {
                    continue;
                }
                let ((ma, ea), (mb, eb)) = (offsets[i], offsets[j]);
                weakest = weakest.min((ma - mb).abs() / (ea * ea + eb * eb).sqrt());
            }
        }
        details.push(format!(
            "long-time offsets {}; weakest separation {weakest:.1} sigma",
            runs.iter()
                .zip(&offsets)
                .map(|(r, (m, e))| format!("{} {m:.4}±{e:.4}", r.label))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        let complete = runs.iter().all(|r| r.result.is_complete());
        Ok((margin, margin > 1.0 && weakest > 3.0 && complete, details.join("; ")))
    })();
    finish("C9", "figure reproduction (edge/bulk ratio)", 1.0, started, outcome)
}

/// Long chain at bond dimension four: wall time, bond cap and a bit-identical
/// rerun.
pub fn scalability(scale: Scale) -> CheckReport {
    let started = Instant::now();
    let outcome = (|| {
        let (n, n_traj, steps, chi) = match scale {
            Scale::Quick => (20, 3, 20, 4),
            Scale::Full => (100, 10, 100, 4),
        };
        let mut ctx = tfi_context(n, dephasing(n, RateSchedule::benchmark())?, 0.01, steps)?;
        ctx.chi_max = chi;
        ctx.sample_stride = 5;
        ctx.sites = vec![0, n / 2];
        let mut opts = EnsembleOptions::new(n_traj);
        opts.workers = workers();
        let first = run_ensemble(&ctx, &opts)?;
        let elapsed = started.elapsed();
        let second = run_ensemble(&ctx, &opts)?;
        let identical = first == second;
        let memory = n * 2 * first.max_bond_dim * first.max_bond_dim;
        let cap = n * 2 * chi * chi;
        let passed = identical
            && first.max_bond_dim <= chi
            && memory <= cap
            && first.is_complete()
            && elapsed <= Duration::from_secs(1800);
        Ok((
            elapsed.as_secs_f64(),
            passed,
            format!(
                "N={n}, {n_traj} trajectories, max bond {}, site tensors <= {memory} elements (cap {cap}), rerun identical: {identical}",
                first.max_bond_dim
            ),
        ))
    })();
    finish("C10", "scalability (wall seconds)", 1800.0, started, outcome)
}

pub fn run_check(id: &str, scale: Scale) -> Option<CheckReport> {
    Some(match id {
        "C1" => analytic_dephasing(scale),
        "C2" => martingale_mean(scale, None),
        "C3" => oracle_equivalence_non_markovian(scale).0,
        "C4" => oracle_equivalence_markovian(scale).0,
        "C5" => trotter_order(scale, TrotterOrder::Second),
        "C6" => tdvp_exactness(scale),
        "C7" => completeness_and_trace(scale),
        "C8" => jump_statistics(scale),
        "C9" => figure_reproduction(scale),
        "C10" => scalability(scale),
        _ => return None,
    })
}

/// Every acceptance check, in order. The non-Markovian equivalence run is
/// shared with the jump-statistics check.
pub fn run_all(scale: Scale) -> Vec<CheckReport> {
    let mut reports = vec![analytic_dephasing(scale), martingale_mean(scale, None)];
    let c3_started = Instant::now();
    let (c3, cmp) = oracle_equivalence_non_markovian(scale);
    reports.push(c3);
    reports.push(oracle_equivalence_markovian(scale).0);
    reports.push(trotter_order(scale, TrotterOrder::Second));
    reports.push(tdvp_exactness(scale));
    reports.push(completeness_and_trace(scale));
    reports.push(match cmp {
        Some(cmp) => jump_statistics_from(&cmp, c3_started),
        None => jump_statistics(scale),
    });
    reports.push(figure_reproduction(scale));
    reports.push(scalability(scale));
    reports
}
