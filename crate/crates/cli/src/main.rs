//! `subpert` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "subpert", version, about = "Signal-subspace perturbation analysis for Hankel trajectory matrices")]
struct Cli {
    /// Worker threads for parallel sweeps and Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed; overrides the seed in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Also write SVG plots next to the CSV output.
    #[arg(long, global = true)]
    plot: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a series from a JSON spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bounds report and ΔP norms for signal + δ·noise.
    Analyze {
        #[command(flatten)]
        pair: PairArgs,
        /// One or more δ values (comma separated).
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        delta: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare the truncated perturbation series with the SVD oracle.
    Expand {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Target tail bound of the truncated series.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an N-sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reconstruction errors for x_n = a^n with constant noise, L = K.
    Reconstruct {
        #[arg(long)]
        a: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Odd series lengths (comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// LS-ESPRIT roots; with --noise and --delta also the perturbation certificate.
    Esprit {
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Minimal LRF coefficients; with --noise and --delta also the perturbation certificate.
    Lrf {
        #[command(flatten)]
        method: MethodArgs,
    },
    /// Monte Carlo experiment from a JSON config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Signal series CSV (index,value).
    #[arg(long)]
    signal: PathBuf,
    /// Noise series CSV (index,value).
    #[arg(long)]
    noise: PathBuf,
    /// Window length.
    #[arg(long = "L")]
    l: usize,
    /// Signal rank; estimated from the spectrum when omitted.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Debug, Args)]
struct MethodArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true, requires = "noise")]
    delta: Option<f64>,
    #[arg(long = "L")]
    l: usize,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<subpert::Error> for Failure {
    fn from(e: subpert::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical precondition failed: {m}");
            ExitCode::from(2)
        }
    }
}
