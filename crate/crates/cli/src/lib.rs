//! Command-line front end: CSV ingestion, configuration, the two-step
//! analysis along the robust and/or normal path, and JSON/CSV outputs.

pub mod config;
pub mod ingest;
pub mod output;
pub mod toy;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Mode, RunConfig};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
        }
    }
}

impl From<robpcr::pipeline::StageError> for CliError {
    fn from(e: robpcr::pipeline::StageError) -> Self {
        if e.source.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "robpcr", version, about = "Robust Bayesian principal component regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize, run the PCA, screen components, sample the nested models
    /// and predict.
    Run(RunArgs),
    /// Rank-1 robust vs traditional PCA on the 21-point toy sample.
    ToyDemo(ToyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV: response first, covariates after.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// CSV of new covariates, optionally with a y_true column.
    #[arg(long)]
    pub predict: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub bf_threshold: Option<f64>,
    #[arg(long)]
    pub vartheta: Option<f64>,
    /// Iterations of the main run.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in of the main run.
    #[arg(long)]
    pub burnin: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.train {
            cfg.train = Some(v.clone());
        }
        if let Some(v) = &self.predict {
            cfg.predict = Some(v.clone());
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        let p = &mut cfg.pipeline;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.rho {
            p.rho = v;
        }
        if let Some(v) = self.bf_threshold {
            p.bf_threshold = v;
        }
        if let Some(v) = self.vartheta {
            p.vartheta = v;
        }
        if let Some(v) = self.iters {
            p.iterations = v;
        }
        if let Some(v) = self.burnin {
            p.burn_in = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "robpcr-toy")]
    pub out_dir: PathBuf,
    /// Second coordinate of the moved 21st point.
    #[arg(long, default_value_t = 20.0)]
    pub outlier: f64,
    /// Keep the 21st point on the line.
    #[arg(long)]
    pub no_outlier: bool,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            output::run_and_write(&cfg)?;
            Ok(())
        }
        Command::ToyDemo(args) => {
            let outlier = (!args.no_outlier).then_some(args.outlier);
            toy::run_and_write(args.seed, outlier, &args.out_dir)?;
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("robpcr: {e}");
            e.exit_code()
        }
    }
}
