use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qubo_bo::cli::{self, RunOptions};
use qubo_bo::config::LoadedConfig;
use qubo_bo::{Backend, BetaSchedule, DesignSpace, Error, SolverConfig};

#[derive(Parser)]
#[command(name = "qubo-bo", version, about = "QUBO-surrogate Bayesian optimization over categorical spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sigma² sweep and the random baseline described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the success threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Continue interrupted traces found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Rebuild the report tables from trace files.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Check a dataset CSV for duplicate, infeasible and malformed rows.
    ValidateDataset {
        dataset: PathBuf,
        /// Take the design space from this config file.
        #[arg(long, conflicts_with = "sites")]
        config: Option<PathBuf>,
        /// Comma-separated site cardinalities, e.g. 6,29,64,64.
        #[arg(long, value_delimiter = ',')]
        sites: Option<Vec<usize>>,
    },
    /// Minimize a QUBO text file and write the ranked samples as CSV.
    Solve {
        qubo: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::SimulatedAnnealing)]
        backend: BackendArg,
        #[arg(long, default_value_t = 300)]
        reads: usize,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long, requires = "beta_end")]
        beta_start: Option<f64>,
        #[arg(long, requires = "beta_start")]
        beta_end: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Program for the external backend.
        #[arg(long, required_if_eq("backend", "external"))]
        command: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exhaustive,
    SimulatedAnnealing,
    External,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn execute(command: Command) -> Result<i32, Error> {
    match command {
        Command::Run { config, out, seed, threshold, resume } => {
            let artifacts = cli::cmd_run(&config, &out, &RunOptions { seed, threshold, resume })?;
            println!("wrote {}", artifacts.manifest.display());
            for p in artifacts.traces.iter().chain(&artifacts.reports) {
                println!("wrote {}", p.display());
            }
            if artifacts.aborted.is_empty() {
                Ok(cli::EXIT_OK)
            } else {
                Ok(cli::EXIT_RUNTIME)
            }
        }
        Command::Report { out, threshold, traces } => {
            let bundle = cli::cmd_report(&traces, &out, threshold)?;
            for row in &bundle.summary {
                println!(
                    "{}: best {} ({} above threshold, {} distinct site values)",
                    row.run, row.best_final, row.above_threshold, row.distinct_site_values
                );
            }
            Ok(cli::EXIT_OK)
        }
        Command::ValidateDataset { dataset, config, sites } => {
            let space = match (config, sites) {
                (Some(path), _) => {
                    let loaded = LoadedConfig::load(&path)?;
                    DesignSpace::new(loaded.file.sites).map_err(|e| Error::ConfigParse {
                        field: "sites".into(),
                        message: e.to_string(),
                    })?
                }
                (None, Some(k)) => DesignSpace::from_cardinalities(&k).map_err(|e| Error::ConfigParse {
                    field: "--sites".into(),
                    message: e.to_string(),
                })?,
                (None, None) => {
                    return Err(Error::ConfigParse {
                        field: "--sites".into(),
                        message: "pass --config or --sites".into(),
                    })
                }
            };
            let findings = cli::cmd_validate_dataset(&dataset, &space)?;
            for f in &findings {
                println!("{f}");
            }
            if findings.is_empty() {
                println!("{}: clean", dataset.display());
                Ok(cli::EXIT_OK)
            } else {
                println!("{}: {} finding(s)", dataset.display(), findings.len());
                Ok(cli::EXIT_FINDINGS)
            }
        }
        Command::Solve { qubo, out, backend, reads, sweeps, beta_start, beta_end, seed, command } => {
            let backend = match backend {
                BackendArg::Exhaustive => Backend::Exhaustive,
                BackendArg::SimulatedAnnealing => Backend::SimulatedAnnealing,
                BackendArg::External => Backend::ExternalAdapter {
                    command: command.expect("clap enforces --command"),
                    args: Vec::new(),
                },
            };
            let beta = match (beta_start, beta_end) {
                (Some(start), Some(end)) => BetaSchedule::Geometric { start, end },
                _ => BetaSchedule::Auto,
            };
            let cfg = SolverConfig { backend, reads, sweeps, beta, seed };
            let pool = cli::cmd_solve(&qubo, &out, &cfg)?;
            if let Some(best) = pool.best() {
                println!("best {} energy {}", best.x, best.energy);
            }
            Ok(cli::EXIT_OK)
        }
    }
}
