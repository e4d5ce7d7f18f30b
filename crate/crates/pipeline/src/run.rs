//! Stage orchestration and the run report.
//!
//! Stages run in a fixed order: ingest, impute, transform, R-mode
//! clustering, t-SNE, Q-mode clustering and per-cluster PCA. Each writes
//! its artifacts as soon as it finishes. The first failing stage stops the
//! run; the report written at that point marks it and every later stage
//! stays `not_run`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use coda::cluster::{
    adjusted_rand_index, diagnostics, divisive_hierarchical, gmm_em, kmeans, qmode_ward, ClusterAssignment,
    Dendrogram, DiagnosticsCurve, GmmFit, KMeansFit,
};
use coda::impute::{impute_table, HistoricalSeries, ImputationReport, PartialTable};
use coda::pca::{select_pca, PcaMethod, PcaModel};
use coda::robust::variation_matrix_robust;
use coda::seed::derive_seed;
use coda::tsne::{affinities, embed, Embedding};
use coda::{CompositionTable, CoordinateMatrix};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::{ingest, svg};

pub const REPORT_FILE: &str = "report.json";
pub const IMPUTATION_FILE: &str = "imputation_report.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const VARIATION_FILE: &str = "variation_matrix.csv";
pub const TSNE_FILE: &str = "tsne.svg";
pub const DENDROGRAM_FILE: &str = "qmode_dendrogram.svg";

pub fn biplot_file(cluster: usize) -> String {
    format!("biplot_cluster{cluster}.svg")
}

/// Stream ids for [`derive_seed`]; the second id is the variable cluster for PCA.
mod stream {
    pub const IMPUTE: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const GMM: u64 = 3;
    pub const DIAGNOSTICS: u64 = 4;
    pub const TSNE: u64 = 5;
    pub const PCA: u64 = 6;
}

const STAGES: [&str; 7] = ["ingest", "impute", "transform", "rmode", "tsne", "qmode", "pca"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub entities: Vec<String>,
    pub components: Vec<String>,
    pub missing_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityCluster {
    pub entity: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivisiveResult {
    pub dendrogram: Dendrogram,
    pub assignment: ClusterAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub kmeans_divisive: f64,
    pub kmeans_gmm: f64,
    pub divisive_gmm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RModeReport {
    pub k: usize,
    /// The k-means partition is the headline one.
    pub headline: Vec<EntityCluster>,
    pub kmeans: KMeansFit,
    pub divisive: DivisiveResult,
    pub gmm: GmmFit,
    pub diagnostics: DiagnosticsCurve,
    pub best_silhouette_k: Option<usize>,
    /// Adjusted Rand index between the methods.
    pub agreement: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableCluster {
    pub cluster: usize,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QModeReport {
    pub k: usize,
    pub labels: Vec<String>,
    /// Robust variation matrix, row-major.
    pub variation_matrix: Vec<Vec<f64>>,
    pub dendrogram: Dendrogram,
    pub clusters: Vec<VariableCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPca {
    pub cluster: usize,
    pub components: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<PcaMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_ratio: Option<f64>,
    /// Cumulative ratio over `pca.report_components` components, selected model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<PcaModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust: Option<PcaModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biplot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsneReport {
    pub embedding: Embedding,
    /// Gaussian bandwidth found for each point.
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    /// Seed handed to each stage, by stage name.
    pub seeds: BTreeMap<String, u64>,
    /// Imputation repetition r runs with seed `seeds.impute + r`.
    pub impute_repetition_seeds: Vec<u64>,
    /// Effective settings, without output directory and thread count.
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub success: bool,
    pub stages: Vec<StageRecord>,
    pub input: Option<InputSummary>,
    pub imputation: Option<ImputationReport>,
    pub rmode: Option<RModeReport>,
    pub tsne: Option<TsneReport>,
    pub qmode: Option<QModeReport>,
    pub pca: Vec<ClusterPca>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == StageStatus::Failed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

/// Outcome of a run. The report is always present, and also on disk
/// unless writing it was what failed.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub error: Option<RunError>,
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    out_dir: PathBuf,
    report: RunReport,
}

type StageResult<T> = Result<T, String>;

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

impl<'a> Runner<'a> {
    fn set(&mut self, name: &str, status: StageStatus, message: Option<String>) {
        let rec = self.report.stages.iter_mut().find(|s| s.name == name).expect("known stage");
        rec.status = status;
        rec.message = message;
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<(), RunError> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Write {
            path,
            message: e.to_string(),
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_vec_pretty(value).expect("report serialises");
        text.push(b'\n');
        self.write(name, &text)
    }

    fn seed(&mut self, name: &str, stream: u64, index: u64) -> u64 {
        let s = derive_seed(self.config.run.seed, stream, index);
        self.report.provenance.seeds.insert(name.to_string(), s);
        s
    }

    fn ingest(&mut self) -> StageResult<(PartialTable, HistoricalSeries)> {
        let table = ingest::read_table(&self.config.table_path(), &self.config.preprocess).map_err(msg)?;
        let history = match self.config.history_path() {
            Some(p) => ingest::read_history(&p).map_err(msg)?,
            None => HistoricalSeries::new(),
        };
        self.report.input = Some(InputSummary {
            entities: table.row_ids().to_vec(),
            components: table.labels().to_vec(),
            missing_cells: table.mask().total(),
        });
        Ok((table, history))
    }

    fn impute(&mut self, table: &PartialTable, history: &HistoricalSeries) -> Result<StageResult<CompositionTable>, RunError> {
        let cfg = &self.config.impute;
        let seed = self.seed("impute", stream::IMPUTE, 0);
        let year = self.config.input.target_year.unwrap_or(i32::MAX);
        let (out, report) = match impute_table(table, history, year, cfg.repetitions, seed, &cfg.options()) {
            Ok(r) => r,
            Err(e) => return Ok(Err(e.to_string())),
        };
        if report.repetitions > 0 {
            self.report.provenance.impute_repetition_seeds =
                (0..report.repetitions as u64).map(|r| seed.wrapping_add(r)).collect();
        }
        self.write_json(IMPUTATION_FILE, &report)?;
        self.report.imputation = Some(report);
        Ok(Ok(out))
    }

    fn rmode(&mut self, table: &CompositionTable, coords: &CoordinateMatrix) -> Result<StageResult<Vec<usize>>, RunError> {
        let cfg = self.config.rmode.clone();
        let z = coords.values();
        let dist = table.distance_matrix();
        let ids = table.row_ids().to_vec();
        let km_seed = self.seed("kmeans", stream::KMEANS, 0);
        let gmm_seed = self.seed("gmm", stream::GMM, 0);
        let diag_seed = self.seed("diagnostics", stream::DIAGNOSTICS, 0);
        let computed = (|| -> StageResult<RModeReport> {
            let km = kmeans(z, cfg.k, cfg.restarts, km_seed).map_err(msg)?;
            let tree = divisive_hierarchical(&dist, ids.clone()).map_err(msg)?;
            let cut = tree.cut(cfg.k).map_err(msg)?;
            let height = tree.merges()[tree.merges().len() + 1 - cfg.k].height;
            let div = ClusterAssignment::new(cut, coda::cluster::ClusterMethod::Divisive, height).map_err(msg)?;
            let gmm = gmm_em(z, cfg.k, gmm_seed).map_err(msg)?;
            let k_max = cfg.k_max.min(z.nrows() - 1);
            let curve = diagnostics(z, cfg.k_min, k_max, cfg.restarts, diag_seed).map_err(msg)?;
            let (a, b, c) = (km.assignment.labels(), div.labels(), gmm.assignment.labels());
            let agreement = Agreement {
                kmeans_divisive: adjusted_rand_index(a, b).map_err(msg)?,
                kmeans_gmm: adjusted_rand_index(a, c).map_err(msg)?,
                divisive_gmm: adjusted_rand_index(b, c).map_err(msg)?,
            };
            Ok(RModeReport {
                k: cfg.k,
                headline: ids
                    .iter()
                    .zip(a)
                    .map(|(e, &c)| EntityCluster {
                        entity: e.clone(),
                        cluster: c,
                    })
                    .collect(),
                best_silhouette_k: curve.best_silhouette_k(),
                kmeans: km,
                divisive: DivisiveResult {
                    dendrogram: tree,
                    assignment: div,
                },
                gmm,
                diagnostics: curve,
                agreement,
            })
        })();
        let rm = match computed {
            Ok(r) => r,
            Err(e) => return Ok(Err(e)),
        };
        let mut csv = String::from("entity_id,cluster,divisive,gmm\n");
        for (i, id) in ids.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(id),
                rm.kmeans.assignment.labels()[i],
                rm.divisive.assignment.labels()[i],
                rm.gmm.assignment.labels()[i]
            ));
        }
        self.write(ASSIGNMENTS_FILE, csv.as_bytes())?;
        let labels = rm.kmeans.assignment.labels().to_vec();
        self.report.rmode = Some(rm);
        Ok(Ok(labels))
    }

    fn tsne(&mut self, table: &CompositionTable, clusters: &[usize]) -> Result<StageResult<()>, RunError> {
        let seed = self.seed("tsne", stream::TSNE, 0);
        let params = self.config.tsne.params();
        let computed = affinities(&table.distance_matrix(), params.perplexity)
            .and_then(|p| Ok((embed(&p, &params, seed)?, p.sigmas().to_vec())));
        let (embedding, sigmas) = match computed {
            Ok(r) => r,
            Err(e) => return Ok(Err(e.to_string())),
        };
        let title = format!("t-SNE of Aitchison distances (perplexity {})", params.perplexity);
        self.write(TSNE_FILE, svg::scatter(&embedding.y, table.row_ids(), clusters, &title).as_bytes())?;
        self.report.tsne = Some(TsneReport { embedding, sigmas });
        Ok(Ok(()))
    }

    fn qmode(&mut self, table: &CompositionTable) -> Result<StageResult<Vec<VariableCluster>>, RunError> {
        let k = self.config.qmode.k;
        let computed = (|| -> StageResult<QModeReport> {
            let varmat = variation_matrix_robust(table).map_err(msg)?;
            let tree = qmode_ward(&varmat).map_err(msg)?;
            let cut = tree.cut(k).map_err(msg)?;
            let labels = varmat.labels().to_vec();
            let clusters = (1..=k)
                .map(|c| VariableCluster {
                    cluster: c,
                    components: (0..labels.len()).filter(|&j| cut[j] == c).map(|j| labels[j].clone()).collect(),
                })
                .collect();
            let v = varmat.values();
            Ok(QModeReport {
                k,
                variation_matrix: (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect(),
                labels,
                dendrogram: tree,
                clusters,
            })
        })();
        let q = match computed {
            Ok(q) => q,
            Err(e) => return Ok(Err(e)),
        };
        let mut csv = String::from("component");
        for l in &q.labels {
            csv.push(',');
            csv.push_str(&csv_field(l));
        }
        csv.push('\n');
        for (l, row) in q.labels.iter().zip(&q.variation_matrix) {
            csv.push_str(&csv_field(l));
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        self.write(VARIATION_FILE, csv.as_bytes())?;
        let title = "Variable clusters (Ward on the robust variation matrix)";
        self.write(DENDROGRAM_FILE, svg::dendrogram(&q.dendrogram, title).as_bytes())?;
        let clusters = q.clusters.clone();
        self.report.qmode = Some(q);
        Ok(Ok(clusters))
    }

    fn pca(&mut self, table: &CompositionTable, clusters: &[VariableCluster]) -> Result<StageResult<()>, RunError> {
        let cfg = self.config.pca.clone();
        let n = table.nrows();
        for vc in clusters {
            let parts = vc.components.len();
            let mut entry = ClusterPca {
                cluster: vc.cluster,
                components: vc.components.clone(),
                skipped: None,
                selected: None,
                classical_ratio: None,
                robust_ratio: None,
                selected_ratio: None,
                classical: None,
                robust: None,
                biplot: None,
            };
            if parts < cfg.min_parts {
                entry.skipped = Some(format!("{parts} part(s), fewer than pca.min_parts = {}", cfg.min_parts));
                self.report.pca.push(entry);
                continue;
            }
            if n <= parts {
                entry.skipped = Some(format!("{n} rows cannot support a robust fit in {} dimensions", parts - 1));
                self.report.pca.push(entry);
                continue;
            }
            let cols: Vec<usize> = vc
                .components
                .iter()
                .map(|c| table.labels().iter().position(|l| l == c).expect("cluster part is a column"))
                .collect();
            let seed = self.seed(&format!("pca_cluster{}", vc.cluster), stream::PCA, vc.cluster as u64);
            let sel = match table
                .select_columns(&cols)
                .map_err(msg)
                .and_then(|sub| select_pca(&CoordinateMatrix::ilr_sequential(&sub.closed()), seed).map_err(msg))
            {
                Ok(s) => s,
                Err(e) => return Ok(Err(format!("variable cluster {}: {e}", vc.cluster))),
            };
            let model = sel.model();
            let (rows, arrows) = model.biplot_coordinates(cfg.biplot_alpha);
            let ratios = (model.explained_ratio(1), model.explained_ratio(2) - model.explained_ratio(1));
            let method = match sel.selected {
                PcaMethod::Classical => "classical",
                PcaMethod::Robust => "robust",
            };
            let title = format!("Variable cluster {} ({method} PCA, {:.2} explained)", vc.cluster, sel.model().explained_ratio_2pc);
            let file = biplot_file(vc.cluster);
            self.write(&file, svg::biplot(&rows, &arrows, &vc.components, ratios, &title).as_bytes())?;
            entry.selected = Some(sel.selected);
            entry.classical_ratio = Some(sel.classical_ratio);
            entry.robust_ratio = Some(sel.robust_ratio);
            entry.selected_ratio = Some(model.explained_ratio(cfg.report_components));
            entry.biplot = Some(file);
            entry.classical = Some(sel.classical);
            entry.robust = Some(sel.robust);
            self.report.pca.push(entry);
        }
        Ok(Ok(()))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs every stage and writes the artifacts into the configured output
/// directory. The config is expected to have passed
/// [`PipelineConfig::validate`].
pub fn run_pipeline(config: &PipelineConfig) -> RunOutcome {
    let report = RunReport {
        success: false,
        stages: STAGES
            .iter()
            .map(|s| StageRecord {
                name: s.to_string(),
                status: StageStatus::NotRun,
                message: None,
            })
            .collect(),
        input: None,
        imputation: None,
        rmode: None,
        tsne: None,
        qmode: None,
        pca: Vec::new(),
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seeds: BTreeMap::new(),
            impute_repetition_seeds: Vec::new(),
            config: config.canonical(),
        },
    };
    let mut runner = Runner {
        config,
        out_dir: config.output_dir(),
        report,
    };
    let error = match fs::create_dir_all(&runner.out_dir) {
        Ok(()) => stages(&mut runner).err(),
        Err(e) => Some(RunError::Write {
            path: runner.out_dir.clone(),
            message: e.to_string(),
        }),
    };
    runner.report.success = error.is_none();
    let written = runner.write_json(REPORT_FILE, &runner.report);
    RunOutcome {
        error: error.or(written.err()),
        report: runner.report,
    }
}

fn stages(r: &mut Runner) -> Result<(), RunError> {
    fn fail<T>(r: &mut Runner, stage: &str, message: String) -> Result<T, RunError> {
        r.set(stage, StageStatus::Failed, Some(message.clone()));
        Err(RunError::Stage {
            stage: stage.into(),
            message,
        })
    }

    let (partial, history) = match r.ingest() {
        Ok(v) => v,
        Err(e) => return fail(r, "ingest", e),
    };
    r.set("ingest", StageStatus::Ok, None);

    let imputed = match r.impute(&partial, &history)? {
        Ok(t) => t,
        Err(e) => return fail(r, "impute", e),
    };
    r.set("impute", StageStatus::Ok, None);

    let table = imputed.closed();
    let coords = CoordinateMatrix::ilr_sequential(&table);
    r.set("transform", StageStatus::Ok, None);

    let clusters = match r.rmode(&table, &coords)? {
        Ok(c) => c,
        Err(e) => return fail(r, "rmode", e),
    };
    r.set("rmode", StageStatus::Ok, None);

    if r.config.tsne.enabled {
        if let Err(e) = r.tsne(&table, &clusters)? {
            return fail(r, "tsne", e);
        }
        r.set("tsne", StageStatus::Ok, None);
    } else {
        r.set("tsne", StageStatus::Skipped, Some("disabled in config".into()));
        remove_stale(&r.out_dir.join(TSNE_FILE));
    }

    let var_clusters = match r.qmode(&table)? {
        Ok(c) => c,
        Err(e) => return fail(r, "qmode", e),
    };
    r.set("qmode", StageStatus::Ok, None);

    if let Err(e) = r.pca(&table, &var_clusters)? {
        return fail(r, "pca", e);
    }
    r.set("pca", StageStatus::Ok, None);
    Ok(())
}

/// A figure left over from an earlier run in the same directory would
/// contradict the report.
fn remove_stale(path: &Path) {
    let _ = fs::remove_file(path);
}
