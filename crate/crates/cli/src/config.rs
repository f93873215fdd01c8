use std::path::{Path, PathBuf};

use claimclust_core::adapter::TrainConfig;
use claimclust_core::analysis::SweepParams;
use claimclust_core::autotune::AutotuneParams;
use claimclust_core::geometry::DEFAULT_MEMORY_CAP;
use claimclust_core::metrics::DEFAULT_SAMPLE_CAP;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a subcommand may read. Keys map 1:1 onto `--kebab-case` flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub claims: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub base_embeddings: Option<PathBuf>,
    pub refined_embeddings: Option<PathBuf>,
    /// Written by `train`, read by `project`. Defaults to `<out_dir>/adapter.c2va`.
    pub adapter: Option<PathBuf>,
    /// Written by `project`. Defaults to `<out_dir>/projected.cev`.
    pub projected: Option<PathBuf>,
    /// Written by `cluster`, read by `sweep`. Defaults to `<out_dir>/dendrogram.csv`.
    pub dendrogram: Option<PathBuf>,
    /// Written by `cluster`, read by `evaluate` and `errors`. Defaults to
    /// `<out_dir>/assignments.csv`.
    pub assignments: Option<PathBuf>,
    pub base_assignments: Option<PathBuf>,
    pub refined_assignments: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Timing log; reports never carry wall-clock data.
    pub log_file: Option<PathBuf>,

    pub threshold: Option<f64>,
    pub auto_threshold: bool,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub scale: f64,
    pub symmetric: bool,

    pub grid_lo: f64,
    pub grid_hi: f64,
    pub step: f64,
    pub refine_count: usize,
    pub subset_size: usize,
    pub subsets: usize,
    pub sample_cap: usize,

    pub k_step: usize,
    pub band: f64,

    pub seed: u64,
    /// Byte budget for the pairwise Ward table; larger inputs use the
    /// centroid backend.
    pub memory_cap: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let tune = AutotuneParams::default();
        let sweep = SweepParams::default();
        RunConfig {
            claims: None,
            pairs: None,
            embeddings: None,
            base_embeddings: None,
            refined_embeddings: None,
            adapter: None,
            projected: None,
            dendrogram: None,
            assignments: None,
            base_assignments: None,
            refined_assignments: None,
            out_dir: PathBuf::from("out"),
            log_file: None,
            threshold: None,
            auto_threshold: false,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            scale: train.scale,
            symmetric: train.symmetric,
            grid_lo: tune.grid_lo,
            grid_hi: tune.grid_hi,
            step: tune.step,
            refine_count: tune.refine_count,
            subset_size: 10_000,
            subsets: 5,
            sample_cap: DEFAULT_SAMPLE_CAP,
            k_step: sweep.k_step,
            band: sweep.band,
            seed: 0,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Fills output paths that default into `out_dir`.
    pub fn resolve(&mut self) {
        let out = self.out_dir.clone();
        let fill = |slot: &mut Option<PathBuf>, name: &str| {
            slot.get_or_insert_with(|| out.join(name));
        };
        fill(&mut self.adapter, "adapter.c2va");
        fill(&mut self.projected, "projected.cev");
        fill(&mut self.dendrogram, "dendrogram.csv");
        fill(&mut self.assignments, "assignments.csv");
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            scale: self.scale,
            symmetric: self.symmetric,
            ..TrainConfig::default()
        }
    }

    pub fn autotune(&self) -> AutotuneParams {
        AutotuneParams {
            grid_lo: self.grid_lo,
            grid_hi: self.grid_hi,
            step: self.step,
            refine_count: self.refine_count,
            sample_cap: self.sample_cap,
            seed: self.seed,
        }
    }

    pub fn sweep(&self) -> SweepParams {
        SweepParams {
            band: self.band,
            k_step: self.k_step,
            sample_cap: self.sample_cap,
            seed: self.seed,
        }
    }

    /// The path under `key`, which must be set and, for inputs, exist.
    pub fn input(&self, key: &str) -> Result<&Path, CliError> {
        let path = self
            .path(key)
            .ok_or_else(|| CliError::Validation(format!("missing required path `{key}` (--{})", key.replace('_', "-"))))?;
        if !path.exists() {
            return Err(CliError::Validation(format!("`{key}` path {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn output(&self, key: &str) -> &Path {
        self.path(key).expect("output paths are filled by resolve")
    }

    fn path(&self, key: &str) -> Option<&Path> {
        let slot = match key {
            "claims" => &self.claims,
            "pairs" => &self.pairs,
            "embeddings" => &self.embeddings,
            "base_embeddings" => &self.base_embeddings,
            "refined_embeddings" => &self.refined_embeddings,
            "adapter" => &self.adapter,
            "projected" => &self.projected,
            "dendrogram" => &self.dendrogram,
            "assignments" => &self.assignments,
            "base_assignments" => &self.base_assignments,
            "refined_assignments" => &self.refined_assignments,
            other => unreachable!("unknown path key {other}"),
        };
        slot.as_deref()
    }
}
