//! Run configuration in TOML.
//!
//! ```toml
//! mode = "tjm"                 # tjm | dense_trajectory | dense_master
//! observables = ["x"]          # x | z
//! sites = [0, 4]               # optional, default all sites
//! sample_stride = 10           # optional, record every 10th step
//! jump_bin_steps = 10          # optional, steps per jump-histogram bin
//!
//! [system]
//! n_sites = 5
//! j_coupling = 1.0
//! g_field = 0.5
//!
//! [evolution]
//! dt = 0.001
//! n_steps = 2000
//! chi_max = 4
//! svd_threshold = 1e-10        # optional
//!
//! [[noise]]
//! kind = "dephasing"           # dephasing | excitation | relaxation
//! schedule = { kind = "damped_oscillatory", gamma_inf = 8.24, amplitude = 12.0, omega = 7.5, cubic_coeff = 0.25 }
//!
//! [ensemble]
//! n_traj = 1000
//! base_seed = 0
//! workers = 8
//! ```
//!
//! `B` and `f_cubic_coeff` are accepted as aliases of `amplitude` and
//! `cubic_coeff`. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, run_master, EnsembleOptions, EnsembleResult, TrajectoryMode};
use crate::error::{Error, Result};
use crate::mpo::MpOperator;
use crate::noise::{ChannelKind, NoiseModel, RateSchedule};
use crate::oracle::{DEFAULT_SUBSTEPS, DENSE_TRAJECTORY_MAX_SITES, MASTER_MAX_SITES};
use crate::tdvp::DEFAULT_SVD_THRESHOLD;
use crate::tjm::{Observable, SimulationContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tjm,
    DenseTrajectory,
    DenseMaster,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tjm" => Ok(Mode::Tjm),
            "dense_trajectory" => Ok(Mode::DenseTrajectory),
            "dense_master" => Ok(Mode::DenseMaster),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_sites: usize,
    pub j_coupling: f64,
    pub g_field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_chi")]
    pub chi_max: usize,
    #[serde(default = "default_threshold")]
    pub svd_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: ChannelKind,
    pub schedule: RateSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_traj: default_n_traj(),
            base_seed: 0,
            workers: default_workers(),
        }
    }
}

fn default_chi() -> usize {
    4
}
fn default_threshold() -> f64 {
    DEFAULT_SVD_THRESHOLD
}
fn default_n_traj() -> usize {
    100
}
fn default_workers() -> usize {
    1
}
fn default_observables() -> Vec<Observable> {
    vec![Observable::X]
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub mode: Mode,
    pub system: SystemConfig,
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    #[serde(default = "default_one")]
    pub sample_stride: usize,
    #[serde(default = "default_one")]
    pub jump_bin_steps: usize,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    if let Err(e) = text.parse::<toml::Table>() {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        return Err(Error::ConfigSyntax {
            line,
            column,
            message: e.message().to_string(),
        });
    }
    let config: SimConfig = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| line_column(text, s.start))
            .map_or_else(String::new, |(l, c)| format!("line {l}, column {c}"));
        Error::config(location, e.message().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.system.n_sites;
        if n == 0 {
            return Err(Error::config("system.n_sites", "must be at least 1"));
        }
        if !self.system.j_coupling.is_finite() || !self.system.g_field.is_finite() {
            return Err(Error::config("system", "couplings must be finite"));
        }
        let ev = &self.evolution;
        if !(ev.dt > 0.0) || !ev.dt.is_finite() {
            return Err(Error::config("evolution.dt", format!("must be positive, got {}", ev.dt)));
        }
        if ev.n_steps == 0 {
            return Err(Error::config("evolution.n_steps", "must be at least 1"));
        }
        if ev.chi_max == 0 {
            return Err(Error::config("evolution.chi_max", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&ev.svd_threshold) {
            return Err(Error::config("evolution.svd_threshold", "must lie in [0, 1)"));
        }
        if self.ensemble.n_traj == 0 {
            return Err(Error::config("ensemble.n_traj", "must be at least 1"));
        }
        if self.ensemble.workers == 0 {
            return Err(Error::config("ensemble.workers", "must be at least 1"));
        }
        if self.observables.is_empty() {
            return Err(Error::config("observables", "must list at least one observable"));
        }
        if self.sample_stride == 0 {
            return Err(Error::config("sample_stride", "must be at least 1"));
        }
        if self.jump_bin_steps == 0 {
            return Err(Error::config("jump_bin_steps", "must be at least 1"));
        }
        if let Some(sites) = &self.sites {
            if sites.is_empty() {
                return Err(Error::config("sites", "must not be empty"));
            }
            if let Some(bad) = sites.iter().find(|&&s| s >= n) {
                return Err(Error::config("sites", format!("site {bad} outside a chain of {n}")));
            }
        }
        let cap = match self.mode {
            Mode::Tjm => None,
            Mode::DenseTrajectory => Some(("dense_trajectory mode", DENSE_TRAJECTORY_MAX_SITES)),
            Mode::DenseMaster => Some(("dense_master mode", MASTER_MAX_SITES)),
        };
        if let Some((what, cap)) = cap {
            if n > cap {
                return Err(Error::SizeCap { what, size: n, cap });
            }
        }
        self.noise_model()?;
        Ok(())
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let specs: Vec<(ChannelKind, RateSchedule)> =
            self.noise.iter().map(|s| (s.kind, s.schedule.clone())).collect();
        NoiseModel::uniform(self.system.n_sites, &specs)
    }

    pub fn context(&self) -> Result<SimulationContext> {
        let h = MpOperator::build_tfi(self.system.n_sites, self.system.j_coupling, self.system.g_field)?;
        let mut ctx = SimulationContext::new(h, self.noise_model()?, self.evolution.dt, self.evolution.n_steps)?;
        ctx.chi_max = self.evolution.chi_max;
        ctx.svd_threshold = self.evolution.svd_threshold;
        ctx.observables = self.observables.clone();
        if let Some(sites) = &self.sites {
            ctx.sites = sites.clone();
        }
        ctx.sample_stride = self.sample_stride;
        ctx.base_seed = self.ensemble.base_seed;
        Ok(ctx)
    }

    /// Runs the configured solver. Master-equation runs come back with
    /// `n_traj = 0`, unit martingale and no jumps.
    pub fn simulate(&self) -> Result<EnsembleResult> {
        self.validate()?;
        let ctx = self.context()?;
        match self.mode {
            Mode::DenseMaster => run_master(&ctx, DEFAULT_SUBSTEPS),
            _ => run_ensemble(&ctx, &self.ensemble_options()),
        }
    }

    pub fn ensemble_options(&self) -> EnsembleOptions {
        EnsembleOptions {
            n_traj: self.ensemble.n_traj,
            workers: self.ensemble.workers,
            mode: match self.mode {
                Mode::DenseTrajectory => TrajectoryMode::Dense,
                _ => TrajectoryMode::Tjm,
            },
            keep_records: false,
            jump_bin_steps: self.jump_bin_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCHMARK: &str = r#"
mode = "tjm"

[system]
n_sites = 5
j_coupling = 1.0
g_field = 0.5

[evolution]
dt = 0.001
n_steps = 2000
chi_max = 4

[[noise]]
kind = "dephasing"
schedule = { kind = "damped_oscillatory", gamma_inf = 8.24, B = 12.0, omega = 7.5, f_cubic_coeff = 0.25 }

[ensemble]
n_traj = 1000
base_seed = 3
workers = 8
"#;

    #[test]
    fn benchmark_configuration_is_accepted() {
        let cfg = parse_config(BENCHMARK).unwrap();
        assert_eq!(cfg.system.n_sites, 5);
        assert_eq!(cfg.evolution.chi_max, 4);
        assert_eq!(cfg.noise[0].schedule, RateSchedule::benchmark());
        assert_eq!(cfg.observables, vec![Observable::X]);
        let ctx = cfg.context().unwrap();
        assert_eq!(ctx.sites, vec![0, 1, 2, 3, 4]);
        assert!((ctx.noise.channels[0].norm_factor - 0.2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_dt_is_rejected() {
        let text = BENCHMARK.replace("dt = 0.001", "dt = 0.0");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "evolution.dt"), "{err}");
    }

    #[test]
    fn lone_excitation_is_rejected() {
        let text = BENCHMARK.replace("kind = \"dephasing\"", "kind = \"excitation\"");
        assert!(parse_config(&text).unwrap_err().to_string().contains("not proportional"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_config("[system]\nn_sites = = 3\n").unwrap_err();
        match err {
            Error::ConfigSyntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BENCHMARK.replace("chi_max = 4", "chi_max = 4\nchi = 3");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("chi"), "{err}");
    }

    #[test]
    fn dense_master_enforces_cap() {
        let text = BENCHMARK
            .replace("mode = \"tjm\"", "mode = \"dense_master\"")
            .replace("n_sites = 5", "n_sites = 8");
        assert!(matches!(parse_config(&text), Err(Error::SizeCap { cap: 6, .. })));
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = parse_config(BENCHMARK).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let toml_text = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&toml_text).unwrap(), cfg);
    }
}
