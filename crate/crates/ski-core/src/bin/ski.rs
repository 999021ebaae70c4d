//! Benchmark CLI for online sparse system identification.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ski_core::cli::{
    cmd_benchmark, cmd_relevance_report, cmd_run, load_config, print_config, resolve_out_dir,
    CliError, DEFAULT_SINDY_LAMBDA,
};

#[derive(Parser)]
#[command(
    name = "ski",
    about = "Online sparse system identification benchmarks: square-root augmented UKF with ARD relevance learning, plus EKF and batch sparse-regression baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (scenario, method, seed) cell; writes trace.csv, timing.csv
    /// and metrics.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --set filter.alpha=0.5 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Regularization weight of the batch baseline.
        #[arg(long, default_value_t = DEFAULT_SINDY_LAMBDA)]
        sindy_lambda: f64,
    },
    /// Run the methods × seeds grid; writes table1.csv and cells.csv.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SINDY_LAMBDA)]
        sindy_lambda: f64,
        /// Parallel benchmark cells; each cell stays single-threaded.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Summarize the final per-basis prior variances of a trace.
    RelevanceReport {
        #[arg(long)]
        trace: PathBuf,
        /// Output path (defaults to relevance.csv next to the trace).
        #[arg(long)]
        out: Option<PathBuf>,
        /// A basis is selected while its variance stays above
        /// threshold × max variance.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
    /// Parse, validate and echo a config.
    PrintConfig {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, set, out_dir, sindy_lambda } => {
            let cfg = load_config(&config, &set)?;
            let out = resolve_out_dir(out_dir, &cfg);
            let metrics = cmd_run(&cfg, &out, sindy_lambda)?;
            eprintln!(
                "run complete: mean_l1_error = {:.6}, per_step_ms = {:.4} -> {}",
                metrics.mean_l1_error,
                metrics.per_step_ms,
                out.display()
            );
            Ok(())
        }
        Command::Benchmark { config, set, out_dir, sindy_lambda, workers } => {
            let cfg = load_config(&config, &set)?;
            let out = resolve_out_dir(out_dir, &cfg);
            let outcome = cmd_benchmark(&cfg, &out, sindy_lambda, workers)?;
            for row in &outcome.table {
                eprintln!(
                    "{:>6}: median mean_l1_error = {}, median per_step_ms = {}, seeds ok = {}",
                    row.method.name(),
                    row.mean_l1_error_median.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
                    row.per_step_ms_median.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    row.seeds_succeeded
                );
            }
            eprintln!("benchmark written to {}", out.display());
            Ok(())
        }
        Command::RelevanceReport { trace, out, threshold } => {
            let out_path = out.unwrap_or_else(|| {
                trace.parent().unwrap_or_else(|| std::path::Path::new(".")).join("relevance.csv")
            });
            let selected = cmd_relevance_report(&trace, &out_path, threshold)?;
            eprintln!("{selected} bases selected -> {}", out_path.display());
            Ok(())
        }
        Command::PrintConfig { config, set } => {
            let cfg = load_config(&config, &set)?;
            println!("{}", print_config(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
