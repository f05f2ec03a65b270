use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tjm_cli::{load_config, run, CliError, ValidationReport};
use tjm_core::validation::{run_all, run_check, Scale, CHECK_IDS};
use tjm_core::{Mode, Observable};

#[derive(Debug, Parser)]
#[command(name = "tjm", version, about = "Tensor jump method for open spin chains")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for the CSV files and run.json.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides ensemble.n_traj.
    #[arg(long, value_name = "N")]
    trajectories: Option<usize>,
    /// Overrides ensemble.base_seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    /// Comma-separated observables, e.g. `x,z`.
    #[arg(long, value_delimiter = ',', value_enum)]
    observables: Option<Vec<ObservableArg>>,
    /// Comma-separated site subset, e.g. `0,50`.
    #[arg(long, value_delimiter = ',')]
    sites: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the acceptance checks and prints a report.
    Validate {
        #[arg(long, value_enum, default_value = "quick")]
        scale: ScaleArg,
        /// Restrict to these check ids, e.g. `C1,C5`.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// Write the machine-readable report here instead of stdout.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Tjm,
    DenseTrajectory,
    DenseMaster,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObservableArg {
    X,
    Z,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Quick,
    Full,
}

fn simulate(args: RunArgs) -> Result<(), CliError> {
    let Some(path) = &args.config else {
        return Err(CliError::Config(tjm_core::Error::Config {
            path: "--config".into(),
            message: "a configuration file is required".into(),
        }));
    };
    let mut config = load_config(path)?;
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::Tjm => Mode::Tjm,
            ModeArg::DenseTrajectory => Mode::DenseTrajectory,
            ModeArg::DenseMaster => Mode::DenseMaster,
        };
    }
    if let Some(n) = args.trajectories {
        config.ensemble.n_traj = n;
    }
    if let Some(seed) = args.seed {
        config.ensemble.base_seed = seed;
    }
    if let Some(w) = args.workers {
        config.ensemble.workers = w;
    }
    if let Some(obs) = args.observables {
        config.observables = obs
            .into_iter()
            .map(|o| match o {
                ObservableArg::X => Observable::X,
                ObservableArg::Z => Observable::Z,
            })
            .collect();
    }
    if let Some(sites) = args.sites {
        config.sites = Some(sites);
    }
    let manifest = run(&config, &args.out)?;
    println!(
        "wrote {} ({} trajectories, {} faults, {:.2}s)",
        args.out.display(),
        manifest.n_traj_completed,
        manifest.faults.len(),
        manifest.wall_time_secs
    );
    Ok(())
}

fn validate(scale: ScaleArg, only: Option<Vec<String>>, report: Option<PathBuf>) -> Result<(), CliError> {
    let scale = match scale {
        ScaleArg::Quick => Scale::Quick,
        ScaleArg::Full => Scale::Full,
    };
    let checks = match only {
        None => run_all(scale),
        Some(ids) => {
            let mut out = Vec::new();
            for id in ids {
                let id = id.trim().to_uppercase();
                match run_check(&id, scale) {
                    Some(r) => out.push(r),
                    None => {
                        return Err(CliError::Config(tjm_core::Error::Config {
                            path: "--only".into(),
                            message: format!("unknown check `{id}`, expected one of {}", CHECK_IDS.join(", ")),
                        }))
                    }
                }
            }
            out
        }
    };
    for c in &checks {
        eprintln!("{}", c.summary_line());
    }
    let report_data = ValidationReport::new(scale, checks);
    let json = report_data.to_json();
    match report {
        Some(path) => std::fs::write(&path, json + "\n").map_err(|source| CliError::Io { path, source })?,
        None => println!("{json}"),
    }
    report_data.into_result().map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Some(Command::Validate { scale, only, report }) => validate(scale, only, report),
        None => simulate(cli.run),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
