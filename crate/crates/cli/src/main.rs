//! `tabworld` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 backend error,
//! 3 dataset or input-table error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::{BackendArgs, EpisodeArgs, RenderArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Backend(String),
    Dataset(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Dataset(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Backend(m) => write!(f, "backend error: {m}"),
            CliError::Dataset(m) => write!(f, "dataset error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tabworld", version, about = "Multi-turn table reasoning agent")]
struct Cli {
    /// Flat TOML config file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer one question about one table
    Run(RunArgs),
    /// Evaluate over JSONL datasets and write reports
    Eval(EvalArgs),
    /// Render a table to JPEG
    Render(RenderCmd),
    /// Print a table as markdown, json or latex
    Serialize(SerializeArgs),
    /// Markup overhead of each text format over tables or datasets
    Analyze(AnalyzeArgs),
    /// Re-run logged trajectories against their recorded transcripts
    Replay(ReplayArgs),
    /// Draw a stratified sample from datasets into a JSONL file
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Table file (.csv, or .json with headers and rows)
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, short)]
    pub question: String,
    /// Serve model replies from a transcript JSONL instead of a server
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Where to append the trajectory log [default: <out-dir>/trajectory.jsonl]
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset JSONL file; repeat for several datasets
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    /// Comma-separated seeds; each drives sampling and generation
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Items per dataset [default: all]
    #[arg(long)]
    pub n: Option<usize>,
    /// Episodes in flight at once
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct RenderCmd {
    /// Table file (.csv or .json)
    pub table: PathBuf,
    /// Output JPEG path
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct SerializeArgs {
    /// Table file (.csv or .json)
    pub table: PathBuf,
    /// markdown, json or latex
    #[arg(long, default_value = "markdown")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset JSONL file; repeatable
    #[arg(long)]
    pub dataset: Vec<PathBuf>,
    /// Table file; repeatable
    #[arg(long)]
    pub table: Vec<PathBuf>,
    /// Print JSON instead of a markdown table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trajectory JSONL written by `run` or `eval`
    pub trajectory: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Dataset JSONL file; repeatable
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output JSONL path
    #[arg(long, short)]
    pub out: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn dispatch(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let file = match &cli.config {
        Some(p) => config::FileConfig::load(p),
        None => Ok(config::FileConfig::default()),
    };
    let result = file.and_then(|file| match cli.command {
        Command::Run(a) => commands::run(&file, a),
        Command::Eval(a) => commands::eval(&file, a),
        Command::Render(a) => commands::render(&file, a),
        Command::Serialize(a) => commands::serialize(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Replay(a) => commands::replay(a),
        Command::Sample(a) => commands::sample(a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tabworld: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args().collect()))
}
