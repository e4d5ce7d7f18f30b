//! End-to-end pipeline: CSV ingestion and preprocessing, imputation,
//! log-ratio transform, clustering of entities and of components, PCA per
//! component cluster and a t-SNE embedding, written out as JSON, CSV and
//! SVG.
//!
//! The `coda` binary wraps [`run_pipeline`]; see [`config`] for the file
//! format.

pub mod config;
pub mod ingest;
pub mod run;
pub mod svg;

pub use config::{ConfigError, PipelineConfig};
pub use run::{run_pipeline, RunError, RunOutcome, RunReport, StageStatus};
