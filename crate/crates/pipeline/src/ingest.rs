//! CSV ingestion and preprocessing.
//!
//! The main table has a header `entity_id,<component>...`; each further
//! line is one entity, and empty cells are missing. Aggregation groups are
//! applied first (arithmetic mean of the observed values in each column),
//! then row and column exclusions.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use coda::impute::{HistoricalSeries, PartialTable};

use crate::config::PreprocessConfig;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    /// `row` is the 1-based line number, `col` the 1-based field number.
    #[error("parse error at line {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },
    #[error("negative value {value} at line {row}, column {col}")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("zero value at line {row}, column {col}; set preprocess.zeros_as_missing to impute it")]
    ZeroValue { row: usize, col: usize },
    #[error("duplicate entity {0}")]
    DuplicateEntity(String),
    #[error("duplicate component {0}")]
    DuplicateComponent(String),
    #[error("unknown entity {0} in preprocessing rules")]
    UnknownEntity(String),
    #[error("unknown component {0} in preprocessing rules")]
    UnknownComponent(String),
    #[error("{0}")]
    Table(String),
}

/// Parsed main table before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub entities: Vec<String>,
    pub components: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let (row, col) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (0, 0),
    };
    IngestError::Parse {
        row,
        col,
        message: e.to_string(),
    }
}

fn parse_number(field: &str, row: usize, col: usize) -> Result<f64, IngestError> {
    let v: f64 = field.parse().map_err(|_| IngestError::Parse {
        row,
        col,
        message: format!("{field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            row,
            col,
            message: format!("{field:?} is not finite"),
        });
    }
    Ok(v)
}

/// Parses the main table. Zeros are rejected unless `zeros_as_missing`.
pub fn parse_table(text: &str, zeros_as_missing: bool) -> Result<RawTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.len() < 3 {
        return Err(IngestError::Parse {
            row: 1,
            col: header.len(),
            message: "need an entity column and at least two components".into(),
        });
    }
    let components: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for c in &components {
        if !seen.insert(c) {
            return Err(IngestError::DuplicateComponent(c.clone()));
        }
    }

    let mut entities = Vec::new();
    let mut values = Vec::new();
    let mut ids = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(IngestError::Parse {
                row,
                col: 1,
                message: "empty entity id".into(),
            });
        }
        if !ids.insert(id.clone()) {
            return Err(IngestError::DuplicateEntity(id));
        }
        let mut cells = Vec::with_capacity(components.len());
        for (k, field) in record.iter().skip(1).enumerate() {
            let col = k + 2;
            if field.is_empty() {
                cells.push(None);
                continue;
            }
            let v = parse_number(field, row, col)?;
            if v < 0.0 {
                return Err(IngestError::NegativeValue { row, col, value: v });
            }
            if v == 0.0 {
                if zeros_as_missing {
                    cells.push(None);
                    continue;
                }
                return Err(IngestError::ZeroValue { row, col });
            }
            cells.push(Some(v));
        }
        entities.push(id);
        values.push(cells);
    }
    Ok(RawTable {
        entities,
        components,
        values,
    })
}

/// Applies aggregation groups, then row and column exclusions. An
/// aggregated row takes the place of its first member.
pub fn preprocess(raw: RawTable, rules: &PreprocessConfig) -> Result<RawTable, IngestError> {
    let RawTable {
        mut entities,
        mut components,
        mut values,
    } = raw;

    for group in &rules.aggregate {
        let index: HashMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
        let mut members = Vec::with_capacity(group.rows.len());
        for r in &group.rows {
            members.push(*index.get(r.as_str()).ok_or_else(|| IngestError::UnknownEntity(r.clone()))?);
        }
        let merged: Vec<Option<f64>> = (0..components.len())
            .map(|j| {
                let seen: Vec<f64> = members.iter().filter_map(|&i| values[i][j]).collect();
                (!seen.is_empty()).then(|| seen.iter().sum::<f64>() / seen.len() as f64)
            })
            .collect();
        let first = *members.iter().min().unwrap();
        if index.contains_key(group.into.as_str()) && !group.rows.contains(&group.into) {
            return Err(IngestError::DuplicateEntity(group.into.clone()));
        }
        let drop: BTreeSet<usize> = members.iter().copied().filter(|&i| i != first).collect();
        entities[first] = group.into.clone();
        values[first] = merged;
        let mut i = 0;
        entities.retain(|_| {
            i += 1;
            !drop.contains(&(i - 1))
        });
        let mut i = 0;
        values.retain(|_| {
            i += 1;
            !drop.contains(&(i - 1))
        });
    }

    for r in &rules.exclude_rows {
        if !entities.contains(r) {
            return Err(IngestError::UnknownEntity(r.clone()));
        }
    }
    let keep_rows: Vec<usize> = (0..entities.len()).filter(|&i| !rules.exclude_rows.contains(&entities[i])).collect();
    for c in &rules.exclude_columns {
        if !components.contains(c) {
            return Err(IngestError::UnknownComponent(c.clone()));
        }
    }
    let keep_cols: Vec<usize> = (0..components.len())
        .filter(|&j| !rules.exclude_columns.contains(&components[j]))
        .collect();

    let values = keep_rows
        .iter()
        .map(|&i| keep_cols.iter().map(|&j| values[i][j]).collect())
        .collect();
    entities = keep_rows.iter().map(|&i| entities[i].clone()).collect();
    components = keep_cols.iter().map(|&j| components[j].clone()).collect();
    Ok(RawTable {
        entities,
        components,
        values,
    })
}

/// Parses the history sidecar: `entity_id,component,year,value`.
pub fn parse_history(text: &str) -> Result<HistoricalSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header != ["entity_id", "component", "year", "value"] {
        return Err(IngestError::Parse {
            row: 1,
            col: 1,
            message: format!("history header must be entity_id,component,year,value, got {}", header.join(",")),
        });
    }
    let mut series = HistoricalSeries::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let year: i32 = record[2].parse().map_err(|_| IngestError::Parse {
            row,
            col: 3,
            message: format!("{:?} is not a year", &record[2]),
        })?;
        let value = parse_number(&record[3], row, 4)?;
        if value < 0.0 {
            return Err(IngestError::NegativeValue { row, col: 4, value });
        }
        series.insert(&record[0], &record[1], year, value);
    }
    series.validate().map_err(|e| IngestError::Table(e.to_string()))?;
    Ok(series)
}

pub fn read_table(path: &Path, rules: &PreprocessConfig) -> Result<PartialTable, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let raw = preprocess(parse_table(&text, rules.zeros_as_missing)?, rules)?;
    PartialTable::new(raw.entities, raw.components, raw.values).map_err(|e| IngestError::Table(e.to_string()))
}

pub fn read_history(path: &Path) -> Result<HistoricalSeries, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_history(&text)
}
