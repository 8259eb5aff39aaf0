//! `clt`: train, evaluate and compare cross-length transfer models.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration or input error,
//! 3 training divergence.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "clt", version, about = "Cross-length transfer sentiment classification")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated out-channel run against the in-channel CNN baseline.
    Transfer(RunArgs),
    /// Train one model on the source corpus and save a checkpoint.
    Train(RunArgs),
    /// Score a checkpoint on the target corpus.
    Eval(RunArgs),
    /// Write a synthetic short/long corpus pair.
    Synth(SynthArgs),
    /// Compare analytic gradients of every objective with finite differences.
    Gradcheck(GradcheckArgs),
    /// Tabulate saved transfer reports.
    Report(ReportArgs),
}

/// Configuration layers shared by the run commands. Typed flags and `--set`
/// override `CLT_*` variables, which override the config file.
#[derive(Args, Default)]
pub struct RunArgs {
    /// TOML file of run keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Any run key, repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long = "out")]
    out_dir: Option<PathBuf>,
    /// cnn, bagged or letranets.
    #[arg(long)]
    model: Option<String>,
    /// long2short or short2long.
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Threads for independent folds and lambda values.
    #[arg(long)]
    workers: Option<usize>,
    /// Mechanisms to ablate one at a time, e.g. `jt,pr,sp`.
    #[arg(long, value_delimiter = ',')]
    ablate: Option<Vec<String>>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// TOML file of generator keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Any generator key, repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long = "out", default_value = "synthetic")]
    out_dir: PathBuf,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Must stay 0: dropout makes the loss non-deterministic.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Coordinates probed per objective.
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the full probe list as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Report files, or directories searched for `*.json` reports.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Write the tables here as well as to stdout.
    #[arg(short, long = "out")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Transfer(a) => commands::transfer::run(&commands::resolve(&a)?),
        Command::Train(a) => commands::train::run(&commands::resolve(&a)?),
        Command::Eval(a) => commands::eval::run(&commands::resolve(&a)?),
        Command::Synth(a) => commands::synth::run(&a),
        Command::Gradcheck(a) => commands::gradcheck::run(&a),
        Command::Report(a) => commands::report::run(&a),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let diverged = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<clt_core::Error>(), Some(clt_core::Error::Divergence { .. })));
    if diverged {
        EXIT_DIVERGED
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
