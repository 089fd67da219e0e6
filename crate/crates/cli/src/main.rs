use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use probefl_core::config::{parse_config, Overrides};

/// Federated learning under Sybil poisoning with a probe-based 1-NN filter.
#[derive(Debug, Parser)]
#[command(name = "probefl", version)]
struct Args {
    /// Experiment file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise ratio of abnormal subject clients, in [0, 1].
    #[arg(long)]
    noise_ratio: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Total client count; subjects are split evenly between normal and abnormal.
    #[arg(long)]
    clients: Option<usize>,
    /// Output directory (default: `out_dir` from the file, then $PROBEFL_OUT_DIR, then `out`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Aggregate every model without filtering.
    #[arg(long)]
    no_filter: bool,
    /// `synthetic` or `mnist` (files from `mnist_dir`).
    #[arg(long)]
    dataset: Option<String>,
    /// Worker threads for client training (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("probefl: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        None => String::new(),
    };
    let overrides = Overrides {
        seed: args.seed,
        noise_ratio: args.noise_ratio,
        rounds: args.rounds,
        clients: args.clients,
        out_dir: args.out_dir.clone(),
        no_filter: args.no_filter,
        dataset: args.dataset.clone(),
        default_out_dir: std::env::var_os("PROBEFL_OUT_DIR").map(PathBuf::from),
    };
    let cfg = match parse_config(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("probefl: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("probefl: {e}");
            return ExitCode::FAILURE;
        }
    }
    match probefl_cli::run_main(&cfg) {
        Ok(rows) => {
            print!("{}", probefl_cli::summary_csv(&rows));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("probefl: {e}");
            ExitCode::FAILURE
        }
    }
}
