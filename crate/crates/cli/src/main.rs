//! `flashover`: leakage-current pipeline over files.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flashover_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "flashover",
    version,
    about = "Insulator condition monitoring from leakage-current waveforms"
)]
struct Cli {
    /// Run manifest (JSON); defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labeled synthetic waveform corpus and its manifest.csv.
    Generate(GenerateArgs),
    /// Turn waveform CSVs into a feature matrix.
    Extract(ExtractArgs),
    /// MRMR ranking for a task.
    Rank(RankArgs),
    /// Rank, keep the top features, train and save a model.
    Train(TrainArgs),
    /// Apply a model to every row of a feature matrix.
    Predict(PredictArgs),
    /// Condition, %U50 and state verdict for one measurement.
    Assess(AssessArgs),
    /// Feature-count sweep over a labeled matrix.
    Sweep(SweepArgs),
    /// Plot-ready tables from earlier outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Waveforms per condition; defaults to the manifest's dataset setting.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Waveform CSV files or directories containing them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// manifest.csv from `generate`, to attach labels by file name.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// classification, regression-wet or regression-dry
    #[arg(long)]
    pub task: String,
    /// How many features to rank; all by default.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub top_k: usize,
    /// default, table2, table4-wet or table4-dry
    #[arg(long, conflicts_with = "params")]
    pub preset: Option<String>,
    /// Hyperparameters as JSON.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Model file name inside the output directory.
    #[arg(long)]
    pub output: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long, conflicts_with_all = ["matrix", "row"])]
    pub waveform: Option<PathBuf>,
    #[arg(long, requires = "row")]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub wet_model: Option<PathBuf>,
    #[arg(long)]
    pub dry_model: Option<PathBuf>,
    /// Phase-to-ground operating voltage, kV; defaults to the measurement's
    /// applied voltage.
    #[arg(long)]
    pub u_ph: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    /// Flashover-test scatter of the string, kV.
    #[arg(long)]
    pub sigma_kv: Option<f64>,
    #[arg(long, default_value = "string")]
    pub string_id: String,
    /// RFC 3339 time of the measurement.
    #[arg(long)]
    pub timestamp: Option<String>,
    /// JSON-lines log to append the record to.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// classification, regression-wet, regression-dry or full
    #[arg(long)]
    pub mode: String,
    /// Comma-separated feature counts, e.g. `1,5,10,all`.
    #[arg(long)]
    pub counts: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep JSON to pivot into a table.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Waveform to decompose into raw, filtered, fundamental and residual.
    #[arg(long)]
    pub waveform: Option<PathBuf>,
    /// Ranking JSON to tabulate.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Matrix for an actual-vs-predicted table; needs `--model`.
    #[arg(long, requires = "model")]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Json(j) if j.is_io() => 2,
        _ => 1,
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
    let ctx = match commands::Context::new(cli.manifest.as_deref(), cli.seed, cli.out_dir) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Extract(a) => commands::extract(&ctx, a),
        Command::Rank(a) => commands::rank(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Assess(a) => commands::assess(&ctx, a),
        Command::Sweep(a) => commands::sweep(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
