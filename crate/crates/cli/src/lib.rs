//! `native4k` command-line tool.
//!
//! Every subcommand reads an optional TOML config (`--config`), applies flag
//! overrides and writes its artifacts below the output directory. Exit codes:
//! 0 success, 2 partial success (some records quarantined or skipped),
//! 1 fatal error or failed check.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{load_config, ToolConfig, DEFAULT_CONFIG};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Curation(#[from] native4k::curation::CurationError),
    #[error(transparent)]
    Rope(#[from] native4k::rope::RopeError),
    #[error(transparent)]
    Wavelet(#[from] native4k::wavelet::WaveletError),
    #[error(transparent)]
    Objective(#[from] native4k::objective::ObjectiveError),
    #[error(transparent)]
    Curriculum(#[from] native4k::curriculum::CurriculumError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "native4k", version, about = "Spectral diagnostics, loss tooling and 4K dataset curation")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory that receives every output file.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Curation worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// Print the annotated reference configuration and exit.
    #[arg(long)]
    pub emit_default_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the curation pipeline over a JSONL manifest.
    Curate(commands::CurateArgs),
    /// Assign aspect-ratio buckets and crop rectangles.
    Bucket(commands::BucketArgs),
    /// Summarize aspect-ratio and resolution distribution of a manifest.
    Audit(commands::AuditArgs),
    /// Band table, phase drift map and cosine pattern for rotary spectra.
    RopeDiagnose(commands::RopeArgs),
    /// Subband energy and histogram statistics of latents or images.
    WaveletStats(commands::WaveletArgs),
    /// Timestep weight and Huber threshold over the t grid.
    LossCurves(commands::LossCurvesArgs),
    /// Finite-difference check of the loss gradient.
    LossCheck(commands::LossCheckArgs),
    /// Validate a curriculum plan and report per-stage record counts.
    CurriculumPlan(commands::PlanArgs),
}

/// Global flags shared by every subcommand, after config merging.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ToolConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ObjectiveArgs {
    #[arg(long)]
    pub gamma_s: Option<f64>,
    #[arg(long)]
    pub beta_w: Option<f64>,
    #[arg(long)]
    pub alpha_c: Option<f64>,
    #[arg(long)]
    pub c_min: Option<f64>,
    #[arg(long)]
    pub c_max: Option<f64>,
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn build_context(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => ToolConfig::default(),
    };
    if let Some(w) = cli.workers {
        config.global.workers = w;
    }
    if let Some(s) = cli.seed {
        config.global.seed = s;
    }
    if let Some(l) = &cli.log_level {
        config.global.log_level = l.clone();
    }
    if let Some(d) = &cli.output_dir {
        config.global.output_dir = d.clone();
    }
    config.validate()?;
    Ok(Context {
        output_dir: config.global.output_dir.clone(),
        config,
    })
}

/// Parses `argv` and runs the selected subcommand, returning the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if cli.emit_default_config {
        print!("{DEFAULT_CONFIG}");
        return 0;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: a subcommand is required\n\nFor more information, try '--help'.");
        return 1;
    };
    let ctx = match build_context(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    init_logging(&ctx.config.global.log_level);
    let result = match command {
        Command::Curate(a) => commands::curate(&ctx, a),
        Command::Bucket(a) => commands::bucket(&ctx, a),
        Command::Audit(a) => commands::audit(&ctx, a),
        Command::RopeDiagnose(a) => commands::rope_diagnose(&ctx, a),
        Command::WaveletStats(a) => commands::wavelet_stats(&ctx, a),
        Command::LossCurves(a) => commands::loss_curves(&ctx, a),
        Command::LossCheck(a) => commands::loss_check(&ctx, a),
        Command::CurriculumPlan(a) => commands::curriculum_plan(&ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
