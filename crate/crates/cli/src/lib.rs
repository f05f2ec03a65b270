//! Run orchestration and artifact writers behind the `tjm` binary.
//!
//! A run writes four files into the output directory:
//!
//! | file              | columns / content                                      |
//! |-------------------|--------------------------------------------------------|
//! | `observables.csv` | `time,site,observable,mean,stderr,n_traj`              |
//! | `martingale.csv`  | `time,mean_mu,var_mu`                                  |
//! | `jumps.csv`       | `time_bin,channel_kind,count`                          |
//! | `run.json`        | config echo, seed, versions, wall time, fault summary  |
//!
//! Numbers are written with fixed decimals through Rust's formatter, which
//! never consults the locale.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;
use tjm_core::validation::CheckReport;
use tjm_core::{EnsembleResult, SimConfig};

pub const OBSERVABLES_HEADER: &str = "time,site,observable,mean,stderr,n_traj";
pub const MARTINGALE_HEADER: &str = "time,mean_mu,var_mu";
pub const JUMPS_HEADER: &str = "time_bin,channel_kind,count";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(tjm_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("simulation failed: {0}")]
    Simulation(tjm_core::Error),
    #[error("{failed} of {total} validation checks failed")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    /// Process exit code. `2` is shared with command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Simulation(_) => 4,
            CliError::ValidationFailed { .. } => 5,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Simulation(_) => "simulation",
            CliError::ValidationFailed { .. } => "validation",
        }
    }
}

impl From<tjm_core::Error> for CliError {
    fn from(e: tjm_core::Error) -> Self {
        use tjm_core::Error as E;
        match e {
            E::Config { .. } | E::ConfigSyntax { .. } | E::SizeCap { .. } => CliError::Config(e),
            other => CliError::Simulation(other),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    tjm_core::parse_config(&text).map_err(CliError::Config)
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub tjm_cli: &'static str,
    pub tjm_core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: SimConfig,
    pub seed: u64,
    pub versions: Versions,
    pub wall_time_secs: f64,
    pub n_traj_completed: usize,
    pub faults: Vec<String>,
    pub max_bond_dim: usize,
}

pub fn observables_csv(result: &EnsembleResult) -> String {
    let mut out = String::from(OBSERVABLES_HEADER);
    out.push('\n');
    for (k, t) in result.times.iter().enumerate() {
        for series in &result.observables {
            let _ = writeln!(
                out,
                "{t:.9},{},{},{:.12},{:.12},{}",
                series.site,
                series.observable.name(),
                series.mean[k],
                series.stderr[k],
                result.n_traj
            );
        }
    }
    out
}

pub fn martingale_csv(result: &EnsembleResult) -> String {
    let mut out = String::from(MARTINGALE_HEADER);
    out.push('\n');
    for ((t, mean), var) in result.times.iter().zip(&result.mu_mean).zip(&result.mu_var) {
        let _ = writeln!(out, "{t:.9},{mean:.12},{var:.12}");
    }
    out
}

/// One row per bin and channel kind. Master-equation runs have no jumps and
/// produce the header only.
pub fn jumps_csv(result: &EnsembleResult) -> String {
    let mut out = String::from(JUMPS_HEADER);
    out.push('\n');
    if result.n_traj == 0 {
        return out;
    }
    let hist = &result.jumps;
    for (t, counts) in hist.bin_times.iter().zip(&hist.counts) {
        for (kind, count) in hist.kinds.iter().zip(counts) {
            let _ = writeln!(out, "{t:.9},{},{count}", kind.name());
        }
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_error(&path))
}

/// Simulates `config` and writes the four artifacts into `out_dir`.
pub fn run(config: &SimConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    config.validate().map_err(CliError::Config)?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let started = Instant::now();
    let result = config.simulate()?;
    let manifest = RunManifest {
        config: config.clone(),
        seed: config.ensemble.base_seed,
        versions: Versions {
            tjm_cli: env!("CARGO_PKG_VERSION"),
            tjm_core: tjm_core::VERSION,
        },
        wall_time_secs: started.elapsed().as_secs_f64(),
        n_traj_completed: result.n_traj,
        faults: result
            .faults
            .iter()
            .map(|f| format!("trajectory {} (seed {}): {}", f.index, f.seed, f.error))
            .collect(),
        max_bond_dim: result.max_bond_dim,
    };
    write_file(out_dir, "observables.csv", &observables_csv(&result))?;
    write_file(out_dir, "martingale.csv", &martingale_csv(&result))?;
    write_file(out_dir, "jumps.csv", &jumps_csv(&result))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(out_dir, "run.json", &(json + "\n"))?;
    Ok(manifest)
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub scale: tjm_core::validation::Scale,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

impl ValidationReport {
    pub fn new(scale: tjm_core::validation::Scale, checks: Vec<CheckReport>) -> Self {
        Self {
            scale,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        // NaN observations (errored checks) become null
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn into_result(self) -> Result<Self, CliError> {
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        if failed == 0 {
            Ok(self)
        } else {
            Err(CliError::ValidationFailed {
                failed,
                total: self.checks.len(),
            })
        }
    }
}
