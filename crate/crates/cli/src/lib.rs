//! `claimclust` command-line front end.
//!
//! Every subcommand reads a JSON [`RunConfig`] (`--config`), applies flag
//! overrides, and writes `<out_dir>/<subcommand>.json` plus CSV exports.
//! Reports hold the resolved config and seed but no timing, so two runs
//! with the same inputs produce identical bytes. Exit codes: 0 on success,
//! 2 for usage and validation errors, 1 for runtime failures.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Environment variable selecting log verbosity (`error` .. `trace`).
pub const LOG_ENV: &str = "CLAIMCLUST_LOG";

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Validation(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<claimclust_core::Error> for CliError {
    fn from(e: claimclust_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "claimclust", version, about = "Contrastive adapter training and Ward clustering for claim embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Validate claims, pairs and embeddings and report their counts.
    IngestCheck,
    /// Train the projection adapter on similar pairs.
    Train,
    /// Apply a trained adapter to an embedding file.
    Project,
    /// Build the Ward dendrogram and cut it at a fixed or tuned threshold.
    Cluster,
    /// Score assignments against ground truth.
    Evaluate,
    /// Count split and mismerge errors, overall and per language.
    Errors,
    /// Compare base and refined clusterings on mono- and multilingual clusters.
    Gain,
    /// Sweep the cluster count around the true count.
    Sweep,
    /// Summarize cosine distances of labeled pairs.
    Pairdist,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::IngestCheck => "ingest-check",
            Command::Train => "train",
            Command::Project => "project",
            Command::Cluster => "cluster",
            Command::Evaluate => "evaluate",
            Command::Errors => "errors",
            Command::Gain => "gain",
            Command::Sweep => "sweep",
            Command::Pairdist => "pairdist",
        }
    }
}

macro_rules! overrides {
    ($($(#[$doc:meta])* $field:ident : $ty:ty),* $(,)?) => {
        #[derive(clap::Args, Debug, Default)]
        struct Overrides {
            /// JSON run configuration.
            #[arg(long, global = true)]
            config: Option<PathBuf>,
            $(
                $(#[$doc])*
                #[arg(long, global = true)]
                $field: Option<$ty>,
            )*
            /// Select the threshold by silhouette search.
            #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
            auto_threshold: Option<bool>,
            /// Use the symmetric loss.
            #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
            symmetric: Option<bool>,
        }

        impl Overrides {
            fn apply(&self, cfg: &mut RunConfig) {
                $(
                    if let Some(v) = &self.$field {
                        cfg.$field = Wrap::wrap(v.clone(), &cfg.$field);
                    }
                )*
                if let Some(v) = self.auto_threshold {
                    cfg.auto_threshold = v;
                }
                if let Some(v) = self.symmetric {
                    cfg.symmetric = v;
                }
            }
        }
    };
}

/// Lets one macro arm assign both `T` and `Option<T>` config slots.
trait Wrap<S> {
    fn wrap(self, slot: &S) -> S;
}

impl<T> Wrap<T> for T {
    fn wrap(self, _: &T) -> T {
        self
    }
}

impl<T> Wrap<Option<T>> for T {
    fn wrap(self, _: &Option<T>) -> Option<T> {
        Some(self)
    }
}

overrides! {
    /// Claims JSONL file.
    claims: PathBuf,
    /// Labeled pairs JSONL file.
    pairs: PathBuf,
    /// Embedding file (CEV1) aligned to the claims.
    embeddings: PathBuf,
    /// Base embeddings for `gain`.
    base_embeddings: PathBuf,
    /// Refined embeddings for `gain`.
    refined_embeddings: PathBuf,
    /// Adapter file (C2VA).
    adapter: PathBuf,
    /// Output of `project`.
    projected: PathBuf,
    /// Dendrogram CSV.
    dendrogram: PathBuf,
    /// Cluster assignment CSV.
    assignments: PathBuf,
    /// Base assignments for `gain`.
    base_assignments: PathBuf,
    /// Refined assignments for `gain`.
    refined_assignments: PathBuf,
    /// Directory for reports and CSV exports.
    out_dir: PathBuf,
    /// Append timing logs to this file instead of stderr.
    log_file: PathBuf,
    /// Fixed Ward distance threshold.
    threshold: f64,
    /// Training pairs per batch.
    batch_size: usize,
    /// Adam learning rate.
    learning_rate: f64,
    /// Training epochs.
    epochs: usize,
    /// Similarity scale inside the loss.
    scale: f64,
    /// Lowest grid threshold.
    grid_lo: f64,
    /// Highest grid threshold.
    grid_hi: f64,
    /// Grid spacing.
    step: f64,
    /// Refinement cuts on each side of the best grid point.
    refine_count: usize,
    /// Rows per tuning subset.
    subset_size: usize,
    /// Number of tuning subsets.
    subsets: usize,
    /// Silhouette sample size.
    sample_cap: usize,
    /// Cluster-count stride for `sweep`.
    k_step: usize,
    /// Relative half-width of the `sweep` range.
    band: f64,
    /// Seed for shuffling, sampling and subsets.
    seed: u64,
    /// Byte budget for the pairwise Ward table.
    memory_cap: u64,
}

fn init_logging(log_file: Option<&std::path::Path>) {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"));
    if let Some(path) = log_file {
        if let Ok(file) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
            builder.target(env_logger::Target::Pipe(Box::new(file)));
        }
    }
    // Later calls in the same process keep the first logger.
    let _ = builder.try_init();
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("claimclust {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.resolve();
    init_logging(cfg.log_file.as_deref());
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", cfg.out_dir.display())))?;
    let started = std::time::Instant::now();
    commands::dispatch(cli.command, &cfg)?;
    log::info!("{} finished in {:.3?}", cli.command.name(), started.elapsed());
    Ok(())
}
