//! Command-line front end for the mklearn library.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or parse, 3 dimension or parameter
//! validation, 4 solver hard failure, 5 soft non-convergence (the model is
//! still written, with `converged false` recorded in its manifest).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod fileio;
mod manifest;

/// A diagnosed failure carrying its exit code.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<mklearn::Error> for Failure {
    fn from(e: mklearn::Error) -> Self {
        use mklearn::Error::*;
        let code = match &e {
            Io(_) | Parse { .. } | UnsupportedVersion(_) => 2,
            NoConvergence { .. } | NonFinite { .. } => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "mklearn", version, about = "Multiple kernel learning: train, predict, and measure")]
pub struct Cli {
    /// Key=value file supplying defaults for any flag of the subcommand;
    /// flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Compute a Gram matrix from a sample file and write it out.
    Gram(GramArgs),
    /// Train a model from precomputed kernels and labels.
    Train(TrainArgs),
    /// Score test points with a trained model.
    Predict(PredictArgs),
    /// Show the kernel weights of a trained model.
    Weights(WeightsArgs),
    /// Evaluate the complexity and risk bound formulas.
    Bound(BoundArgs),
    /// Generate a synthetic benchmark with known Bayes error.
    Synth(SynthArgs),
    /// Run the scenario-by-model grid experiment.
    Sweep(SweepArgs),
    /// Compute ranking metrics from scores and labels files.
    Eval(EvalArgs),
}

#[derive(clap::Args)]
pub struct GramArgs {
    /// Feature vectors, one sample per line of whitespace-separated reals.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// String samples, one per line; required by the spectrum kernel.
    #[arg(long, value_name = "FILE")]
    pub strings: Option<PathBuf>,
    /// Kernel family: linear | rbf | poly | spectrum | precomputed.
    #[arg(long, default_value = "linear")]
    pub kernel: String,
    /// RBF bandwidth.
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    /// Polynomial offset.
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    /// Spectrum substring length.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Existing Gram file, for --kernel precomputed.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Skip cosine normalization (it is applied by default).
    #[arg(long)]
    pub no_normalize: bool,
    /// Write the binary format instead of text.
    #[arg(long)]
    pub binary: bool,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Kernel file; repeat once per kernel. Order fixes the kernel indices.
    #[arg(long = "kernel", value_name = "FILE", required = true)]
    pub kernels: Vec<PathBuf>,
    /// Labels file, one 1 or -1 per line, aligned with the kernel rows.
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Block-norm exponent: a real in [64/63, 64], or the tokens `1` and
    /// `inf`, which map to 64/63 and 64. `--p 1` requires --mu > 0.
    #[arg(long, default_value = "2")]
    pub p: String,
    /// Elastic-net ridge weight; 0 disables the ridge term.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Box constraint on the dual variables.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Loss: hinge | squared.
    #[arg(long, default_value = "hinge")]
    pub loss: String,
    /// Projected-gradient tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Train-by-test cross-kernel file; repeat once per kernel, in the
    /// training order. Square Gram files score the training set itself.
    #[arg(long = "cross", value_name = "FILE", required = true)]
    pub crosses: Vec<PathBuf>,
    /// Optional test labels; when given, metrics are printed.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// False-positive cap for the partial AUC metric.
    #[arg(long, default_value_t = 0.1)]
    pub fpr: f64,
    /// Scores file to write, one score per line.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct WeightsArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Print comma-separated values instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct BoundArgs {
    /// Number of kernels.
    #[arg(long)]
    pub m: usize,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// First norm exponent, >= 1 (exact 1 is meaningful here).
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Second norm exponent; defaults to p.
    #[arg(long)]
    pub q: Option<f64>,
    /// Interpolation weight on the p-norm; c2 is 1 - c1.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// Loss Lipschitz constant for the risk bound.
    #[arg(long, default_value_t = 1.0)]
    pub lipschitz: f64,
    /// Confidence parameter in (0, 1).
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Empirical risk; when given, the full risk bound is printed too.
    #[arg(long)]
    pub emp_risk: Option<f64>,
    /// Print the fixed comparison grid over norms instead of one setting.
    #[arg(long)]
    pub consistency: bool,
    /// Print comma-separated values instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    /// Number of kernel blocks.
    #[arg(long, default_value_t = 6)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub block_dim: usize,
    /// 1 puts all class signal in the first block, 0 spreads it evenly.
    #[arg(long, default_value_t = 1.0)]
    pub sparsity: f64,
    /// Bayes error the mean separation is calibrated to, in (0, 0.5).
    #[arg(long, default_value_t = 0.1)]
    pub bayes: f64,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write binary kernel files instead of text.
    #[arg(long)]
    pub binary: bool,
    /// Directory receiving kernels, labels, and the scenario manifest.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(clap::Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 6)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub block_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub bayes: f64,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    /// Comma-separated sparsity values.
    #[arg(long, default_value = "0,1")]
    pub nus: String,
    /// Comma-separated exponents; each entry is a real or `1`/`inf`.
    #[arg(long, default_value = "64/63,4/3,64")]
    pub ps: String,
    /// Comma-separated ridge weights.
    #[arg(long, default_value = "0")]
    pub mus: String,
    /// Either a replicate count (seeds 0..count) or a comma-separated list.
    #[arg(long, default_value = "20")]
    pub seeds: String,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value = "hinge")]
    pub loss: String,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// CSV file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// False-positive cap for the partial AUC metric.
    #[arg(long, default_value_t = 0.1)]
    pub fpr: f64,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand(raw) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("mklearn: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("mklearn: {}", f.message);
            f.code
        }
    }
}
