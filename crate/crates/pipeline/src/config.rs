//! Run configuration.
//!
//! A config is a TOML file. Paths inside it are relative to the file's
//! directory. Every section except `[input]` may be omitted.
//!
//! ```toml
//! [input]
//! table = "crime.csv"
//! history = "history.csv"
//! target_year = 2022
//!
//! [preprocess]
//! exclude_rows = ["MDA"]
//! exclude_columns = ["Sexual violence"]
//! [[preprocess.aggregate]]
//! into = "GBR"
//! rows = ["GBR-EW", "GBR-NI", "GBR-S"]
//!
//! [impute]
//! repetitions = 100
//!
//! [rmode]
//! k = 3
//!
//! [qmode]
//! k = 3
//!
//! [tsne]
//! perplexity = 10.0
//!
//! [run]
//! seed = 20221
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use coda::impute::IterativeOptions;
use coda::tsne::TsneParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 20221;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Main table: header `entity_id,<component>...`, empty cells missing.
    pub table: PathBuf,
    /// Optional history: `entity_id,component,year,value`.
    #[serde(default)]
    pub history: Option<PathBuf>,
    /// Year of the main table; history before it feeds the trend fill.
    #[serde(default)]
    pub target_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateGroup {
    pub into: String,
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub exclude_rows: Vec<String>,
    pub exclude_columns: Vec<String>,
    pub aggregate: Vec<AggregateGroup>,
    /// Treat zero cells as missing instead of rejecting the table.
    pub zeros_as_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub repetitions: usize,
    pub knn_k: usize,
    pub trim_fraction: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub lts_starts: usize,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        let o = IterativeOptions::default();
        Self {
            repetitions: 100,
            knn_k: o.knn_k,
            trim_fraction: o.trim_fraction,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            lts_starts: o.lts_starts,
        }
    }
}

impl ImputeConfig {
    pub fn options(&self) -> IterativeOptions {
        IterativeOptions {
            knn_k: self.knn_k,
            trim_fraction: self.trim_fraction,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            lts_starts: self.lts_starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RModeConfig {
    pub k: usize,
    pub restarts: usize,
    /// Range of K for the elbow and silhouette curve.
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for RModeConfig {
    fn default() -> Self {
        Self {
            k: 3,
            restarts: 50,
            k_min: 2,
            k_max: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QModeConfig {
    pub k: usize,
}

impl Default for QModeConfig {
    fn default() -> Self {
        Self { k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    /// Variable clusters with fewer parts are not analysed.
    pub min_parts: usize,
    /// Biplot scaling exponent; 0.5 is the symmetric biplot.
    pub biplot_alpha: f64,
    /// Number of leading components whose cumulative ratio is reported.
    pub report_components: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            min_parts: 3,
            biplot_alpha: 0.5,
            report_components: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub enabled: bool,
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_sd: f64,
    pub log_every: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        let p = TsneParams::default();
        Self {
            enabled: true,
            perplexity: p.perplexity,
            learning_rate: p.learning_rate,
            iterations: p.iterations,
            exaggeration: p.exaggeration,
            exaggeration_iterations: p.exaggeration_iterations,
            initial_momentum: p.initial_momentum,
            final_momentum: p.final_momentum,
            momentum_switch: p.momentum_switch,
            init_sd: p.init_sd,
            log_every: p.log_every,
        }
    }
}

impl TsneConfig {
    pub fn params(&self) -> TsneParams {
        TsneParams {
            perplexity: self.perplexity,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            exaggeration: self.exaggeration,
            exaggeration_iterations: self.exaggeration_iterations,
            initial_momentum: self.initial_momentum,
            final_momentum: self.final_momentum,
            momentum_switch: self.momentum_switch,
            init_sd: self.init_sd,
            log_every: self.log_every,
            ..TsneParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; unset uses every core. Results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub impute: ImputeConfig,
    #[serde(default)]
    pub rmode: RModeConfig,
    #[serde(default)]
    pub qmode: QModeConfig,
    #[serde(default)]
    pub pca: PcaConfig,
    #[serde(default)]
    pub tsne: TsneConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut config: PipelineConfig = toml::from_str(text)?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn table_path(&self) -> PathBuf {
        self.resolve(&self.input.table)
    }

    pub fn history_path(&self) -> Option<PathBuf> {
        self.input.history.as_deref().map(|p| self.resolve(p))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// Checks value ranges and that the input files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.rmode.k < 2 {
            return bad(format!("rmode.k must be at least 2, got {}", self.rmode.k));
        }
        if self.qmode.k < 2 {
            return bad(format!("qmode.k must be at least 2, got {}", self.qmode.k));
        }
        if self.rmode.k_min < 2 || self.rmode.k_max < self.rmode.k_min {
            return bad(format!(
                "rmode.k_min..k_max must satisfy 2 <= k_min <= k_max, got {}..{}",
                self.rmode.k_min, self.rmode.k_max
            ));
        }
        if self.rmode.restarts == 0 {
            return bad("rmode.restarts must be at least 1".into());
        }
        if self.impute.repetitions == 0 {
            return bad("impute.repetitions must be at least 1".into());
        }
        if !(0.0..=0.5).contains(&self.impute.trim_fraction) {
            return bad(format!("impute.trim_fraction must lie in [0, 0.5], got {}", self.impute.trim_fraction));
        }
        if self.impute.knn_k == 0 {
            return bad("impute.knn_k must be at least 1".into());
        }
        if !(self.tsne.perplexity > 1.0) {
            return bad(format!("tsne.perplexity must exceed 1, got {}", self.tsne.perplexity));
        }
        if !(self.tsne.learning_rate > 0.0) || !(self.tsne.init_sd > 0.0) {
            return bad("tsne.learning_rate and tsne.init_sd must be positive".into());
        }
        if self.pca.min_parts < 3 {
            return bad("pca.min_parts must be at least 3 for a two-component biplot".into());
        }
        if self.run.threads == Some(0) {
            return bad("run.threads must be at least 1".into());
        }
        for g in &self.preprocess.aggregate {
            if g.rows.is_empty() {
                return bad(format!("aggregate group {} lists no rows", g.into));
            }
        }
        let table = self.table_path();
        if !table.is_file() {
            return bad(format!("input table {} does not exist", table.display()));
        }
        if let Some(h) = self.history_path() {
            if !h.is_file() {
                return bad(format!("history file {} does not exist", h.display()));
            }
            if self.input.target_year.is_none() {
                return bad("input.target_year is required when a history file is given".into());
            }
        }
        Ok(())
    }

    /// Copy without the output directory and thread count, which do not
    /// affect results.
    pub fn canonical(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        c.run.threads = None;
        c
    }

    /// SHA-256 of the [`canonical`](Self::canonical) config, so moving a
    /// run or changing its parallelism keeps the hash.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.canonical()).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[input]\ntable = \"t.csv\"\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = PipelineConfig::from_toml(MINIMAL, "/data").unwrap();
        assert_eq!(c.run.seed, DEFAULT_SEED);
        assert_eq!(c.impute.repetitions, 100);
        assert_eq!((c.rmode.k, c.qmode.k), (3, 3));
        assert!(c.tsne.enabled);
        assert_eq!(c.table_path(), PathBuf::from("/data/t.csv"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}[rmode]\nkk = 3\n");
        assert!(PipelineConfig::from_toml(&text, ".").is_err());
    }

    #[test]
    fn hash_ignores_output_and_threads() {
        let a = PipelineConfig::from_toml(MINIMAL, "/a").unwrap();
        let mut b = PipelineConfig::from_toml(MINIMAL, "/b").unwrap();
        b.output.dir = PathBuf::from("elsewhere");
        b.run.threads = Some(4);
        assert_eq!(a.hash(), b.hash());
        b.run.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn small_k_rejected() {
        let mut c = PipelineConfig::from_toml(MINIMAL, ".").unwrap();
        c.rmode.k = 1;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }
}
