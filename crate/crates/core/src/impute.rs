//! Missing-value imputation for compositional tables.
//!
//! Two stages run in order. First, cells with enough history are filled from
//! a linear trend of value on year. The remaining cells go through the
//! iterative scheme: a nearest-neighbour start in Aitchison geometry, then
//! repeated LTS regressions of each incomplete column's pivot coordinate on
//! the other coordinates until the imputed cells settle. The iterative stage
//! is repeated with different seeds and the repetitions are averaged in ilr
//! space.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::CompositionTable;
use crate::error::{CodaError, ImputeError, RobustError};
use crate::geometry::{aitchison_distance_on, PivotBasis};
use crate::robust::{lts_regression_with, retained_count, LtsFit, LtsOptions};
use crate::seed::derive_seed;

/// Composition table whose cells may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTable {
    row_ids: Vec<String>,
    labels: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
}

impl PartialTable {
    /// Observed cells must be finite and strictly positive.
    pub fn new(
        row_ids: Vec<String>,
        labels: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, ImputeError> {
        let d = labels.len();
        if d < 2 {
            return Err(CodaError::TooFewParts { parts: d }.into());
        }
        if row_ids.len() != values.len() {
            return Err(CodaError::LabelCount {
                expected: values.len(),
                found: row_ids.len(),
            }
            .into());
        }
        for (row, r) in values.iter().enumerate() {
            if r.len() != d {
                return Err(CodaError::RaggedRow {
                    row,
                    expected: d,
                    found: r.len(),
                }
                .into());
            }
            for (col, v) in r.iter().enumerate() {
                if let Some(v) = v {
                    if !(*v > 0.0) || !v.is_finite() {
                        return Err(ImputeError::NonPositive { row, col });
                    }
                }
            }
        }
        Ok(Self {
            row_ids,
            labels,
            values,
        })
    }

    pub fn from_complete(table: &CompositionTable) -> Self {
        let values = (0..table.nrows())
            .map(|i| table.row_parts(i).into_iter().map(Some).collect())
            .collect();
        Self {
            row_ids: table.row_ids().to_vec(),
            labels: table.labels().to_vec(),
            values,
        }
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn nrows(&self) -> usize {
        self.values.len()
    }

    pub fn nparts(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row][col]
    }

    /// Marks a cell missing. Used to build masked fixtures.
    pub fn mask_cell(&mut self, row: usize, col: usize) {
        self.values[row][col] = None;
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row][col] = Some(value);
    }

    pub fn mask(&self) -> MissingMask {
        MissingMask {
            cells: self
                .values
                .iter()
                .map(|r| r.iter().map(Option::is_none).collect())
                .collect(),
        }
    }

    /// The complete table, if no cell is missing.
    pub fn to_complete(&self) -> Result<CompositionTable, ImputeError> {
        let n = self.nrows();
        let d = self.nparts();
        let mut data = DMatrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                data[(i, j)] = self.values[i][j].ok_or(ImputeError::NonConvergent {
                    cells: vec![(i, j)],
                })?;
            }
        }
        Ok(CompositionTable::new(
            self.row_ids.clone(),
            self.labels.clone(),
            data,
        )?)
    }
}

/// n x D missingness pattern, `true` = missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingMask {
    cells: Vec<Vec<bool>>,
}

impl MissingMask {
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.cells[row][col]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        self.cells
            .iter()
            .map(|r| r.iter().filter(|&&m| m).count())
            .collect()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let d = self.cells.first().map_or(0, Vec::len);
        (0..d)
            .map(|j| self.cells.iter().filter(|r| r[j]).count())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.row_counts().iter().sum()
    }

    /// Missing cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, r) in self.cells.iter().enumerate() {
            for (j, &m) in r.iter().enumerate() {
                if m {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// No row and no column may be entirely missing.
    pub fn validate(&self) -> Result<(), ImputeError> {
        let d = self.cells.first().map_or(0, Vec::len);
        for (i, c) in self.row_counts().into_iter().enumerate() {
            if c == d {
                return Err(ImputeError::EmptyRow(i));
            }
        }
        let n = self.cells.len();
        for (j, c) in self.column_counts().into_iter().enumerate() {
            if c == n {
                return Err(ImputeError::EmptyColumn(j));
            }
        }
        Ok(())
    }
}

/// Historical observations keyed by (entity, component).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoricalSeries {
    series: BTreeMap<(String, String), Vec<(i32, f64)>>,
}

impl HistoricalSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity: &str, component: &str, year: i32, value: f64) {
        self.series
            .entry((entity.to_string(), component.to_string()))
            .or_default()
            .push((year, value));
    }

    /// Sorts every series by year and checks years are distinct and values positive.
    pub fn validate(&mut self) -> Result<(), ImputeError> {
        for ((entity, component), obs) in self.series.iter_mut() {
            obs.sort_by_key(|o| o.0);
            let bad = |reason: String| ImputeError::InvalidHistory {
                entity: entity.clone(),
                component: component.clone(),
                reason,
            };
            if obs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(bad("duplicate year".into()));
            }
            if let Some(o) = obs.iter().find(|o| !(o.1 > 0.0) || !o.1.is_finite()) {
                return Err(bad(format!("value {} in {} is not positive", o.1, o.0)));
            }
        }
        Ok(())
    }

    pub fn get(&self, entity: &str, component: &str) -> Option<&[(i32, f64)]> {
        self.series
            .get(&(entity.to_string(), component.to_string()))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrendOutcome {
    Filled(f64),
    Unfillable,
}

/// Fewer points than this and the trend is not trusted.
pub const MIN_TREND_POINTS: usize = 3;

/// Least-squares line of value on year, evaluated at `target_year`.
pub fn impute_by_trend(series: &[(i32, f64)], target_year: i32) -> TrendOutcome {
    if series.len() < MIN_TREND_POINTS {
        return TrendOutcome::Unfillable;
    }
    let n = series.len() as f64;
    let mean_x = series.iter().map(|o| o.0 as f64).sum::<f64>() / n;
    let mean_y = series.iter().map(|o| o.1).sum::<f64>() / n;
    let sxx: f64 = series.iter().map(|o| (o.0 as f64 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return TrendOutcome::Unfillable;
    }
    let sxy: f64 = series
        .iter()
        .map(|o| (o.0 as f64 - mean_x) * (o.1 - mean_y))
        .sum();
    let pred = mean_y + sxy / sxx * (target_year as f64 - mean_x);
    if pred > 0.0 && pred.is_finite() {
        TrendOutcome::Filled(pred)
    } else {
        TrendOutcome::Unfillable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMethod {
    Observed,
    TrendRegression,
    IterativeKnnLts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCell {
    pub row: usize,
    pub col: usize,
    pub entity: String,
    pub component: String,
    pub method: CellMethod,
    pub value: f64,
    /// Standard deviation of the value across repetitions (iterative cells).
    pub std_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    /// n x D method tags.
    pub methods: Vec<Vec<CellMethod>>,
    pub cells: Vec<ImputedCell>,
    pub missing_before: usize,
    pub filled_by_trend: usize,
    pub filled_iteratively: usize,
    pub repetitions: usize,
    /// Iterations used by each repetition.
    pub iterations: Vec<usize>,
    /// Column updates that kept the previous estimate because the LTS design
    /// was rank deficient.
    pub degenerate_fallbacks: usize,
    /// Repetitions (by index) that did not converge and were left out of the
    /// average, with the cells still moving when they stopped.
    pub dropped_repetitions: Vec<(usize, Vec<(usize, usize)>)>,
    /// Repetitions whose sweep did not settle and whose cells were taken
    /// from the exact fixed point of the final fits instead.
    pub solved_repetitions: Vec<usize>,
    pub options: IterativeOptions,
}

impl ImputationReport {
    fn observed(table: &PartialTable, options: &IterativeOptions) -> Self {
        Self {
            methods: vec![vec![CellMethod::Observed; table.nparts()]; table.nrows()],
            cells: Vec::new(),
            missing_before: table.mask().total(),
            filled_by_trend: 0,
            filled_iteratively: 0,
            repetitions: 0,
            iterations: Vec::new(),
            degenerate_fallbacks: 0,
            dropped_repetitions: Vec::new(),
            solved_repetitions: Vec::new(),
            options: options.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterativeOptions {
    /// Neighbours for the initial fill (capped at the number of complete rows).
    pub knn_k: usize,
    pub trim_fraction: f64,
    /// Maximum relative change of any imputed cell that counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random starts per LTS fit.
    pub lts_starts: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            knn_k: 5,
            trim_fraction: 0.25,
            tolerance: 1e-6,
            max_iterations: 50,
            lts_starts: 500,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Nearest-neighbour start: each missing cell takes the neighbours' median
/// log-ratio of that part to the geometric mean of the row's observed parts.
fn knn_fill(table: &PartialTable, k: usize) -> Result<Vec<Vec<f64>>, ImputeError> {
    let n = table.nrows();
    let d = table.nparts();
    let complete: Vec<usize> = (0..n)
        .filter(|&i| table.values[i].iter().all(Option::is_some))
        .collect();
    let mut filled: Vec<Vec<f64>> = table
        .values
        .iter()
        .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    if complete.len() == n {
        return Ok(filled);
    }
    if complete.is_empty() {
        return Err(ImputeError::NoCompleteRows);
    }
    let k = k.clamp(1, complete.len());
    for i in 0..n {
        let observed: Vec<usize> = (0..d).filter(|&j| table.values[i][j].is_some()).collect();
        if observed.len() == d {
            continue;
        }
        let mut by_dist: Vec<(f64, usize)> = complete
            .iter()
            .map(|&c| {
                let dist = if observed.len() >= 2 {
                    aitchison_distance_on(&filled[i], &filled[c], &observed)
                } else {
                    0.0
                };
                (dist, c)
            })
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbours: Vec<usize> = by_dist[..k].iter().map(|x| x.1).collect();
        let log_ref = |r: &[f64]| {
            observed.iter().map(|&o| r[o].ln()).sum::<f64>() / observed.len() as f64
        };
        let own_ref = log_ref(&filled[i]);
        for j in 0..d {
            if table.values[i][j].is_some() {
                continue;
            }
            let mut ratios: Vec<f64> = neighbours
                .iter()
                .map(|&m| filled[m][j].ln() - log_ref(&filled[m]))
                .collect();
            filled[i][j] = (own_ref + median(&mut ratios)).exp();
        }
    }
    Ok(filled)
}

struct Repetition {
    values: Vec<Vec<f64>>,
    iterations: usize,
    fallbacks: usize,
    solved: bool,
}

/// With every column's fit fixed, one sweep is an affine map of each row's
/// missing log-parts, so its fixed point solves a small linear system per
/// row. Columns without a fit keep their current value. Returns false when a
/// system is singular or the solution overflows.
fn solve_fixed_point(
    x: &mut [Vec<f64>],
    mask: &MissingMask,
    fits: &BTreeMap<usize, Option<LtsFit>>,
) -> bool {
    let d = x[0].len();
    let w = ((d - 1) as f64 / d as f64).sqrt();
    // ln x_j = a_j + sum_o c_j[o] ln x_o over o != j
    let maps: BTreeMap<usize, (f64, Vec<f64>)> = fits
        .iter()
        .filter_map(|(&j, fit)| {
            let fit = fit.as_ref()?;
            let v = PivotBasis::with_first(d, j).contrast();
            let c = (0..d)
                .map(|o| {
                    if o == j {
                        return 0.0;
                    }
                    let slope: f64 = (1..d - 1).map(|k| fit.coefficients[k] * v[(o, k)]).sum();
                    1.0 / (d - 1) as f64 + slope / w
                })
                .collect();
            Some((j, (fit.coefficients[0] / w, c)))
        })
        .collect();
    for (i, row) in x.iter_mut().enumerate() {
        let unknown: Vec<usize> = (0..d)
            .filter(|&j| mask.is_missing(i, j) && maps.contains_key(&j))
            .collect();
        if unknown.is_empty() {
            continue;
        }
        let m = unknown.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for (r, &j) in unknown.iter().enumerate() {
            let (a0, c) = &maps[&j];
            b[r] = *a0;
            for o in (0..d).filter(|&o| o != j) {
                match unknown.iter().position(|&u| u == o) {
                    Some(col) => a[(r, col)] -= c[o],
                    None => b[r] += c[o] * row[o].ln(),
                }
            }
        }
        let Some(logs) = a.lu().solve(&b) else {
            return false;
        };
        for (&j, l) in unknown.iter().zip(logs.iter()) {
            let v = l.exp();
            if !(v.is_finite() && v > 0.0) {
                return false;
            }
            row[j] = v;
        }
    }
    true
}

fn run_repetition(
    table: &PartialTable,
    seed: u64,
    opts: &IterativeOptions,
) -> Result<Repetition, ImputeError> {
    let n = table.nrows();
    let d = table.nparts();
    let mut x = knn_fill(table, opts.knn_k)?;
    let mask = table.mask();
    let col_counts = mask.column_counts();
    // most incomplete columns first
    let mut columns: Vec<usize> = (0..d).filter(|&j| col_counts[j] > 0).collect();
    columns.sort_by(|&a, &b| col_counts[b].cmp(&col_counts[a]).then(a.cmp(&b)));
    let missing = mask.cells();
    let pivot_weight = ((d - 1) as f64 / d as f64).sqrt();

    // Regressions use the complete rows, whose coordinates never change, so
    // each column is fitted once. With too few complete rows the fit falls
    // back to every row observed in that column and is redone per iteration.
    let row_counts = mask.row_counts();
    let complete: Vec<usize> = (0..n).filter(|&i| row_counts[i] == 0).collect();
    let mut fixed: BTreeMap<usize, Option<LtsFit>> = BTreeMap::new();
    let mut warm: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut current: BTreeMap<usize, Option<LtsFit>> = BTreeMap::new();
    let mut fallbacks = 0;
    for iteration in 1..=opts.max_iterations {
        let before: Vec<f64> = missing.iter().map(|&(i, j)| x[i][j]).collect();
        for &j in &columns {
            let basis = PivotBasis::with_first(d, j);
            let coords: Vec<Vec<f64>> = x.iter().map(|r| basis.coords(r)).collect();
            let use_complete = retained_count(complete.len(), opts.trim_fraction) >= d - 1;
            let fit = if use_complete && fixed.contains_key(&j) {
                fixed[&j].clone()
            } else {
                let rows: Vec<usize> = if use_complete {
                    complete.clone()
                } else {
                    (0..n).filter(|&i| !mask.is_missing(i, j)).collect()
                };
                let predictors =
                    DMatrix::from_fn(rows.len(), d - 2, |r, c| coords[rows[r]][c + 1]);
                let response: Vec<f64> = rows.iter().map(|&i| coords[i][0]).collect();
                let lts = LtsOptions {
                    // a refit only tracks the previous solution
                    starts: if warm.contains_key(&j) { 0 } else { opts.lts_starts },
                    warm_start: warm.get(&j).cloned(),
                    // repetitions differ only through the random starts
                    exhaustive_limit: 0,
                    ..LtsOptions::default()
                };
                let fit = match lts_regression_with(
                    &predictors,
                    &response,
                    opts.trim_fraction,
                    derive_seed(seed, 0, j as u64),
                    &lts,
                ) {
                    Ok(fit) => Some(fit),
                    Err(RobustError::DegenerateDesign) => {
                        fallbacks += 1;
                        None
                    }
                    Err(e) => return Err(e.into()),
                };
                if use_complete {
                    fixed.insert(j, fit.clone());
                } else if let Some(f) = &fit {
                    warm.insert(j, f.retained.clone());
                }
                fit
            };
            current.insert(j, fit.clone());
            // degenerate design: keep the current estimate
            let Some(fit) = fit else { continue };
            for i in (0..n).filter(|&i| mask.is_missing(i, j)) {
                let z = fit.predict(&coords[i][1..]);
                let log_rest = (0..d)
                    .filter(|&o| o != j)
                    .map(|o| x[i][o].ln())
                    .sum::<f64>()
                    / (d - 1) as f64;
                x[i][j] = (log_rest + z / pivot_weight).exp();
            }
        }
        let still_moving: Vec<(usize, usize)> = missing
            .iter()
            .zip(&before)
            .filter(|(&(i, j), &old)| {
                let v = x[i][j];
                !(v.is_finite() && v > 0.0) || ((v - old) / old).abs() >= opts.tolerance
            })
            .map(|(&c, _)| c)
            .collect();
        if still_moving.is_empty() {
            return Ok(Repetition {
                values: x,
                iterations: iteration,
                fallbacks,
                solved: false,
            });
        }
        let diverged = missing
            .iter()
            .any(|&(i, j)| !(x[i][j].is_finite() && x[i][j] > 0.0));
        if diverged || iteration == opts.max_iterations {
            // The sweep contracts slowly, or not at all, when missing parts
            // of one row are strongly coupled; with the last fits held fixed
            // its limit can be computed directly.
            if current.len() == columns.len() && solve_fixed_point(&mut x, &mask, &current) {
                return Ok(Repetition {
                    values: x,
                    iterations: iteration,
                    fallbacks,
                    solved: true,
                });
            }
            return Err(ImputeError::NonConvergent {
                cells: still_moving,
            });
        }
    }
    // max_iterations == 0: keep the neighbour start
    Ok(Repetition {
        values: x,
        iterations: 0,
        fallbacks,
        solved: false,
    })
}

/// Iterative KNN + LTS imputation repeated `repetitions` times with seeds
/// `seed + r`; imputed cells are averaged in ilr space. Observed cells are
/// copied through unchanged.
pub fn impute_iterative(
    table: &PartialTable,
    repetitions: usize,
    seed: u64,
    opts: &IterativeOptions,
) -> Result<(CompositionTable, ImputationReport), ImputeError> {
    if repetitions == 0 {
        return Err(ImputeError::NoRepetitions);
    }
    let mask = table.mask();
    mask.validate()?;
    let mut report = ImputationReport::observed(table, opts);
    let missing = mask.cells();
    if missing.is_empty() {
        return Ok((table.to_complete()?, report));
    }

    let runs: Vec<Result<Repetition, ImputeError>> = (0..repetitions)
        .into_par_iter()
        .map(|r| run_repetition(table, seed.wrapping_add(r as u64), opts))
        .collect();
    // A repetition whose random LTS starts produce a non-contracting update
    // is dropped; the run fails only when no repetition converges.
    let mut kept = Vec::with_capacity(runs.len());
    let mut last_error = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                if run.solved {
                    report.solved_repetitions.push(r);
                }
                kept.push(run)
            }
            Err(ImputeError::NonConvergent { cells }) => {
                report.dropped_repetitions.push((r, cells.clone()));
                last_error = Some(ImputeError::NonConvergent { cells });
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(last_error.expect("at least one repetition ran"));
    }
    let runs = kept;

    let mut out = table.clone();
    for &(i, j) in &missing {
        let vals: Vec<f64> = runs.iter().map(|r| r.values[i][j]).collect();
        let m = vals.len() as f64;
        // With observed parts fixed, the mean of ilr coordinates corresponds
        // to the geometric mean of the imputed part.
        let value = (vals.iter().map(|v| v.ln()).sum::<f64>() / m).exp();
        let mean = vals.iter().sum::<f64>() / m;
        let std_dev = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        out.set(i, j, value);
        report.methods[i][j] = CellMethod::IterativeKnnLts;
        report.cells.push(ImputedCell {
            row: i,
            col: j,
            entity: table.row_ids[i].clone(),
            component: table.labels[j].clone(),
            method: CellMethod::IterativeKnnLts,
            value,
            std_dev: Some(std_dev),
        });
    }
    report.filled_iteratively = missing.len();
    report.repetitions = repetitions;
    report.iterations = runs.iter().map(|r| r.iterations).collect();
    report.degenerate_fallbacks = runs.iter().map(|r| r.fallbacks).sum();
    Ok((out.to_complete()?, report))
}

/// Fills every cell whose history supports a trend prediction. Only
/// observations before `target_year` are used. Returns the filled cells.
pub fn apply_trend(
    table: &mut PartialTable,
    history: &HistoricalSeries,
    target_year: i32,
) -> Vec<(usize, usize, f64)> {
    let mut filled = Vec::new();
    for (i, j) in table.mask().cells() {
        let Some(series) = history.get(&table.row_ids[i], &table.labels[j]) else {
            continue;
        };
        let prior: Vec<(i32, f64)> = series
            .iter()
            .filter(|o| o.0 < target_year)
            .cloned()
            .collect();
        if let TrendOutcome::Filled(v) = impute_by_trend(&prior, target_year) {
            table.set(i, j, v);
            filled.push((i, j, v));
        }
    }
    filled
}

/// Trend stage followed by the iterative stage on whatever is left.
pub fn impute_table(
    table: &PartialTable,
    history: &HistoricalSeries,
    target_year: i32,
    repetitions: usize,
    seed: u64,
    opts: &IterativeOptions,
) -> Result<(CompositionTable, ImputationReport), ImputeError> {
    table.mask().validate()?;
    let missing_before = table.mask().total();
    let mut work = table.clone();
    let trend = apply_trend(&mut work, history, target_year);
    let (out, mut report) = impute_iterative(&work, repetitions, seed, opts)?;
    report.missing_before = missing_before;
    report.filled_by_trend = trend.len();
    for (i, j, v) in trend {
        report.methods[i][j] = CellMethod::TrendRegression;
        report.cells.push(ImputedCell {
            row: i,
            col: j,
            entity: table.row_ids[i].clone(),
            component: table.labels[j].clone(),
            method: CellMethod::TrendRegression,
            value: v,
            std_dev: None,
        });
    }
    report.cells.sort_by_key(|c| (c.row, c.col));
    Ok((out, report))
}
