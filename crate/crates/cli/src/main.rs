use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rkoop::commands::{self, PredictArgs};
use rkoop::config::{RunConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
use rkoop::CliError;

/// Robust Koopman operator estimation from noisy time series.
#[derive(Parser)]
#[command(name = "rkoop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured experiment and write trajectories.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit every configured estimator and write one JSON per estimator.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Snapshot CSV to fit instead of simulating.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Eigenvalue reports for fitted estimates.
    Spectrum {
        #[arg(long = "estimate", required = true)]
        estimates: Vec<PathBuf>,
        /// Sampling period for continuous-time eigenvalues.
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = robust_koopman::spectrum::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 10)]
        k_dominant: usize,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Predict past the training window and score against the truth.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Fitted estimates; when absent the configured estimators are fitted.
        #[arg(long = "estimate")]
        estimates: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Seeds x training sizes x estimators, as one CSV table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn default_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate { config, seed, output_dir } => {
            let cfg = RunConfig::load(&config)?;
            commands::simulate(&cfg, &cfg.resolve_output_dir(output_dir.as_deref()), seed)
        }
        Command::Fit {
            config,
            data,
            seed,
            output_dir,
        } => {
            let cfg = RunConfig::load(&config)?;
            commands::fit(&cfg, &cfg.resolve_output_dir(output_dir.as_deref()), data.as_deref(), seed)
        }
        Command::Spectrum {
            estimates,
            dt,
            tol,
            k_dominant,
            output_dir,
        } => commands::spectrum(&estimates, dt, tol, k_dominant, &default_out(output_dir)),
        Command::Predict {
            config,
            estimates,
            data,
            seed,
            horizon,
            output_dir,
        } => {
            let cfg = RunConfig::load(&config)?;
            let args = PredictArgs {
                estimates: &estimates,
                data: data.as_deref(),
                seed,
                horizon,
            };
            commands::predict(&cfg, &cfg.resolve_output_dir(output_dir.as_deref()), &args)
        }
        Command::Bench {
            config,
            output_dir,
            threads,
        } => {
            let cfg = RunConfig::load(&config)?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            commands::bench(&cfg, &cfg.resolve_output_dir(output_dir.as_deref()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", Path::new(&f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
