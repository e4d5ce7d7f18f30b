//! Typed compositions, tables of compositions and their coordinate
//! representations.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CodaError;
use crate::geometry::{self, PivotBasis};

fn default_labels(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

fn check_parts(parts: &[f64]) -> Result<(), CodaError> {
    if parts.len() < 2 {
        return Err(CodaError::TooFewParts { parts: parts.len() });
    }
    for (index, &value) in parts.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(CodaError::NonPositivePart { index, value });
        }
    }
    Ok(())
}

fn check_labels(labels: &[String], d: usize) -> Result<(), CodaError> {
    if labels.len() != d {
        return Err(CodaError::LabelCount {
            expected: d,
            found: labels.len(),
        });
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(CodaError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// A D-part composition: strictly positive parts with component labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    parts: Vec<f64>,
    labels: Vec<String>,
}

impl Composition {
    pub fn new(parts: Vec<f64>, labels: Vec<String>) -> Result<Self, CodaError> {
        check_parts(&parts)?;
        check_labels(&labels, parts.len())?;
        Ok(Self { parts, labels })
    }

    /// Composition with generated labels `x1..xD`.
    pub fn from_parts(parts: Vec<f64>) -> Result<Self, CodaError> {
        let labels = default_labels(parts.len());
        Self::new(parts, labels)
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Same composition rescaled to unit sum.
    pub fn closed(&self) -> Composition {
        Composition {
            parts: geometry::close(&self.parts),
            labels: self.labels.clone(),
        }
    }

    pub fn clr(&self) -> Vec<f64> {
        geometry::clr(&self.parts)
    }

    pub fn alr(&self, reference: usize) -> Vec<f64> {
        geometry::alr(&self.parts, reference)
    }

    /// Pivot ilr coordinates in column order.
    pub fn ilr(&self) -> Vec<f64> {
        PivotBasis::sequential(self.len()).coords(&self.parts)
    }

    pub fn ilr_with(&self, basis: &PivotBasis) -> Result<Vec<f64>, CodaError> {
        if basis.parts() != self.len() {
            return Err(CodaError::BasisMismatch {
                expected: basis.parts(),
                found: self.len(),
            });
        }
        Ok(basis.coords(&self.parts))
    }
}

/// Closes a strictly positive vector to unit sum.
pub fn closure(parts: &[f64]) -> Result<Composition, CodaError> {
    check_parts(parts)?;
    Composition::from_parts(geometry::close(parts))
}

/// Closed composition whose pivot coordinates under `basis` are `z`.
pub fn ilr_inverse(z: &[f64], basis: &PivotBasis) -> Result<Composition, CodaError> {
    let parts = basis.inverse(z)?;
    Composition::from_parts(parts)
}

pub fn aitchison_distance(a: &Composition, b: &Composition) -> Result<f64, CodaError> {
    if a.labels != b.labels {
        return Err(CodaError::LabelMismatch);
    }
    Ok(geometry::aitchison_distance(&a.parts, &b.parts))
}

/// n compositions sharing one label set, stored as an n x D matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTable {
    row_ids: Vec<String>,
    labels: Vec<String>,
    #[serde(with = "crate::serde_matrix")]
    data: DMatrix<f64>,
}

impl CompositionTable {
    pub fn new(
        row_ids: Vec<String>,
        labels: Vec<String>,
        data: DMatrix<f64>,
    ) -> Result<Self, CodaError> {
        let (n, d) = data.shape();
        if d < 2 {
            return Err(CodaError::TooFewParts { parts: d });
        }
        check_labels(&labels, d)?;
        if row_ids.len() != n {
            return Err(CodaError::LabelCount {
                expected: n,
                found: row_ids.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &row_ids {
            if !seen.insert(id.as_str()) {
                return Err(CodaError::DuplicateRowId(id.clone()));
            }
        }
        for i in 0..n {
            for j in 0..d {
                let v = data[(i, j)];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(CodaError::NonPositivePart { index: j, value: v });
                }
            }
        }
        Ok(Self {
            row_ids,
            labels,
            data,
        })
    }

    /// Builds a table from rows with generated ids (`r1..rn`) and labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CodaError> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(CodaError::RaggedRow {
                    row,
                    expected: d,
                    found: r.len(),
                });
            }
        }
        let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(
            (1..=n).map(|i| format!("r{i}")).collect(),
            default_labels(d),
            data,
        )
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn nparts(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row_parts(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().cloned().collect()
    }

    pub fn row(&self, i: usize) -> Composition {
        Composition {
            parts: self.row_parts(i),
            labels: self.labels.clone(),
        }
    }

    /// Every row rescaled to unit sum.
    pub fn closed(&self) -> CompositionTable {
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        CompositionTable {
            row_ids: self.row_ids.clone(),
            labels: self.labels.clone(),
            data,
        }
    }

    /// Subcomposition on the given columns (not closed).
    pub fn select_columns(&self, cols: &[usize]) -> Result<CompositionTable, CodaError> {
        let data = self.data.select_columns(cols);
        let labels = cols.iter().map(|&j| self.labels[j].clone()).collect();
        CompositionTable::new(self.row_ids.clone(), labels, data)
    }

    /// n x n matrix of pairwise Aitchison distances between rows.
    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.nrows();
        let clrs: Vec<Vec<f64>> = (0..n).map(|i| geometry::clr(&self.row_parts(i))).collect();
        DMatrix::from_fn(n, n, |i, j| {
            clrs[i]
                .iter()
                .zip(&clrs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
    }
}

/// Closed per-component geometric mean of the rows.
pub fn center(table: &CompositionTable) -> Composition {
    Composition {
        parts: geometry::closed_geometric_center(&table.data),
        labels: table.labels.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationMethod {
    Classical,
    Robust,
}

/// D x D matrix of pairwise log-ratio variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationMatrix {
    #[serde(with = "crate::serde_matrix")]
    values: DMatrix<f64>,
    method: VariationMethod,
    labels: Vec<String>,
}

impl VariationMatrix {
    /// Wraps a precomputed matrix, checking symmetry, zero diagonal and sign.
    pub fn new(
        values: DMatrix<f64>,
        method: VariationMethod,
        labels: Vec<String>,
    ) -> Result<Self, CodaError> {
        let d = values.nrows();
        if values.ncols() != d {
            return Err(CodaError::InvalidBasis("variation matrix must be square".into()));
        }
        check_labels(&labels, d)?;
        for j in 0..d {
            if values[(j, j)] != 0.0 {
                return Err(CodaError::InvalidBasis("nonzero diagonal".into()));
            }
            for k in 0..d {
                let v = values[(j, k)];
                if v < 0.0 || !v.is_finite() || v != values[(k, j)] {
                    return Err(CodaError::InvalidBasis(format!(
                        "entry ({j}, {k}) is negative or asymmetric"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            method,
            labels,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn method(&self) -> VariationMethod {
        self.method
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }
}

/// Classical variation matrix: `t_jk = var(ln x_j - ln x_k)` with an `n - 1` denominator.
pub fn variation_matrix_classical(table: &CompositionTable) -> Result<VariationMatrix, CodaError> {
    let n = table.nrows();
    if n < 2 {
        return Err(CodaError::InsufficientRows {
            rows: n,
            required: 2,
        });
    }
    let d = table.nparts();
    let mut values = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j + 1..d {
            let t = geometry::logratio_variance(&table.data, j, k);
            values[(j, k)] = t;
            values[(k, j)] = t;
        }
    }
    Ok(VariationMatrix {
        values,
        method: VariationMethod::Classical,
        labels: table.labels.clone(),
    })
}

/// How a [`CoordinateMatrix`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordKind {
    Clr,
    Ilr { basis: PivotBasis },
    Alr { reference: usize },
}

/// Real-valued coordinates of a composition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMatrix {
    #[serde(with = "crate::serde_matrix")]
    values: DMatrix<f64>,
    kind: CoordKind,
    component_labels: Vec<String>,
}

impl CoordinateMatrix {
    pub fn clr(table: &CompositionTable) -> Self {
        let n = table.nrows();
        let d = table.nparts();
        let mut values = DMatrix::zeros(n, d);
        for i in 0..n {
            for (j, c) in geometry::clr(&table.row_parts(i)).into_iter().enumerate() {
                values[(i, j)] = c;
            }
        }
        Self {
            values,
            kind: CoordKind::Clr,
            component_labels: table.labels.clone(),
        }
    }

    pub fn ilr(table: &CompositionTable, basis: &PivotBasis) -> Result<Self, CodaError> {
        if basis.parts() != table.nparts() {
            return Err(CodaError::BasisMismatch {
                expected: basis.parts(),
                found: table.nparts(),
            });
        }
        let n = table.nrows();
        let mut values = DMatrix::zeros(n, basis.dim());
        for i in 0..n {
            for (j, z) in basis.coords(&table.row_parts(i)).into_iter().enumerate() {
                values[(i, j)] = z;
            }
        }
        Ok(Self {
            values,
            kind: CoordKind::Ilr {
                basis: basis.clone(),
            },
            component_labels: table.labels.clone(),
        })
    }

    /// Pivot coordinates in column order.
    pub fn ilr_sequential(table: &CompositionTable) -> Self {
        Self::ilr(table, &PivotBasis::sequential(table.nparts()))
            .expect("sequential basis always matches")
    }

    pub fn alr(table: &CompositionTable, reference: usize) -> Result<Self, CodaError> {
        let d = table.nparts();
        if reference >= d {
            return Err(CodaError::InvalidBasis(format!(
                "alr reference {reference} out of range for {d} parts"
            )));
        }
        let n = table.nrows();
        let mut values = DMatrix::zeros(n, d - 1);
        for i in 0..n {
            for (j, z) in geometry::alr(&table.row_parts(i), reference)
                .into_iter()
                .enumerate()
            {
                values[(i, j)] = z;
            }
        }
        Ok(Self {
            values,
            kind: CoordKind::Alr { reference },
            component_labels: table.labels.clone(),
        })
    }

    /// Wraps raw values already expressed in ilr coordinates of `basis`.
    pub fn from_ilr_values(
        values: DMatrix<f64>,
        basis: PivotBasis,
        component_labels: Vec<String>,
    ) -> Result<Self, CodaError> {
        if values.ncols() != basis.dim() {
            return Err(CodaError::BasisMismatch {
                expected: basis.dim(),
                found: values.ncols(),
            });
        }
        check_labels(&component_labels, basis.parts())?;
        Ok(Self {
            values,
            kind: CoordKind::Ilr { basis },
            component_labels,
        })
    }

    /// Raw values treated as ilr coordinates in the sequential basis with
    /// generated labels. Convenient for synthetic data.
    pub fn from_raw_ilr(values: DMatrix<f64>) -> Self {
        let d = values.ncols() + 1;
        Self {
            values,
            kind: CoordKind::Ilr {
                basis: PivotBasis::sequential(d),
            },
            component_labels: default_labels(d),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> &CoordKind {
        &self.kind
    }

    pub fn basis(&self) -> Option<&PivotBasis> {
        match &self.kind {
            CoordKind::Ilr { basis } => Some(basis),
            _ => None,
        }
    }

    pub fn component_labels(&self) -> &[String] {
        &self.component_labels
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Back-transforms ilr rows to a closed composition table.
    pub fn to_table(&self, row_ids: Vec<String>) -> Result<CompositionTable, CodaError> {
        let basis = self.basis().ok_or_else(|| {
            CodaError::InvalidBasis("only ilr coordinates can be back-transformed".into())
        })?;
        let n = self.nrows();
        let mut data = DMatrix::zeros(n, basis.parts());
        for i in 0..n {
            let z: Vec<f64> = self.values.row(i).iter().cloned().collect();
            for (j, x) in basis.inverse(&z)?.into_iter().enumerate() {
                data[(i, j)] = x;
            }
        }
        CompositionTable::new(row_ids, self.component_labels.clone(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    fn close_to(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn closure_examples() {
        assert_eq!(closure(&[2.0, 2.0]).unwrap().parts(), &[0.5, 0.5]);
        let c = closure(&[1.0, 2.0, 4.0]).unwrap();
        assert!(close_to(c.parts(), &[1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0], 1e-15));
        let again = closure(c.parts()).unwrap();
        assert!(close_to(again.parts(), c.parts(), 1e-15));
    }

    #[test]
    fn closure_rejects_non_positive() {
        assert_eq!(
            closure(&[1.0, 0.0, 3.0]),
            Err(CodaError::NonPositivePart { index: 1, value: 0.0 })
        );
        assert!(matches!(
            closure(&[1.0, -2.0]),
            Err(CodaError::NonPositivePart { index: 1, .. })
        ));
        assert!(matches!(closure(&[1.0]), Err(CodaError::TooFewParts { parts: 1 })));
    }

    #[test]
    fn clr_examples() {
        let eq = Composition::from_parts(vec![1.0 / 3.0; 3]).unwrap();
        assert!(close_to(&eq.clr(), &[0.0, 0.0, 0.0], 1e-15));
        let c = Composition::from_parts(vec![1.0, 2.0, 4.0]).unwrap();
        assert!(close_to(&c.clr(), &[-LN_2, 0.0, LN_2], 1e-15));
    }

    #[test]
    fn ilr_examples() {
        let c = Composition::from_parts(vec![E, 1.0]).unwrap();
        assert!(close_to(&c.ilr(), &[0.5f64.sqrt()], 1e-15));
        let eq = Composition::from_parts(vec![0.2; 5]).unwrap();
        assert!(eq.ilr().iter().all(|z| z.abs() < 1e-15));
    }

    #[test]
    fn ilr_inverse_examples() {
        let basis = PivotBasis::sequential(2);
        let c = ilr_inverse(&[0.5f64.sqrt()], &basis).unwrap();
        let expect = closure(&[E, 1.0]).unwrap();
        assert!(close_to(c.parts(), expect.parts(), 1e-15));
        let zero = ilr_inverse(&[0.0; 3], &PivotBasis::sequential(4)).unwrap();
        assert!(close_to(zero.parts(), &[0.25; 4], 1e-15));
        assert!(matches!(
            ilr_inverse(&[0.0; 2], &PivotBasis::sequential(4)),
            Err(CodaError::BasisMismatch { .. })
        ));
    }

    #[test]
    fn distance_example() {
        let a = closure(&[1.0, 2.0, 4.0]).unwrap();
        let b = closure(&[1.0, 1.0, 1.0]).unwrap();
        let d = aitchison_distance(&a, &b).unwrap();
        assert!((d - 2f64.sqrt() * LN_2).abs() < 1e-15);
        assert!((d - 0.9803).abs() < 1e-4);
        assert_eq!(aitchison_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_label_mismatch() {
        let a = Composition::new(vec![1.0, 2.0], vec!["a".into(), "b".into()]).unwrap();
        let b = Composition::new(vec![1.0, 2.0], vec!["a".into(), "c".into()]).unwrap();
        assert_eq!(aitchison_distance(&a, &b), Err(CodaError::LabelMismatch));
    }

    #[test]
    fn composition_invariants() {
        assert!(matches!(
            Composition::new(vec![1.0, 2.0], vec!["a".into(), "a".into()]),
            Err(CodaError::DuplicateLabel(_))
        ));
        assert!(matches!(
            Composition::new(vec![1.0, 2.0], vec!["a".into()]),
            Err(CodaError::LabelCount { .. })
        ));
    }

    #[test]
    fn variation_examples() {
        let t = CompositionTable::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![0.5, 1.0, 1.5],
        ])
        .unwrap();
        let v = variation_matrix_classical(&t).unwrap();
        assert!(v.values().iter().all(|x| x.abs() < 1e-15));

        // log-ratios 0 and -2, mean -1 => (1 + 1) / 1 = 2
        let t = CompositionTable::from_rows(&[vec![1.0, 1.0], vec![1.0, E * E]]).unwrap();
        let v = variation_matrix_classical(&t).unwrap();
        assert!((v.get(0, 1) - 2.0).abs() < 1e-14);
        assert_eq!(v.get(0, 1), v.get(1, 0));
        assert_eq!(v.get(0, 0), 0.0);
    }

    #[test]
    fn variation_needs_two_rows() {
        let t = CompositionTable::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            variation_matrix_classical(&t),
            Err(CodaError::InsufficientRows { rows: 1, required: 2 })
        ));
    }

    #[test]
    fn center_examples() {
        let one = CompositionTable::from_rows(&[vec![1.0, 3.0]]).unwrap();
        assert!(close_to(center(&one).parts(), &[0.25, 0.75], 1e-15));
        let two = CompositionTable::from_rows(&[vec![0.2, 0.8], vec![0.8, 0.2]]).unwrap();
        assert!(close_to(center(&two).parts(), &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn table_rejects_duplicates_and_zeros() {
        let data = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            CompositionTable::new(
                vec!["a".into(), "a".into()],
                vec!["x".into(), "y".into()],
                data.clone()
            ),
            Err(CodaError::DuplicateRowId(_))
        ));
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 4.0]);
        assert!(CompositionTable::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            zero
        )
        .is_err());
    }

    #[test]
    fn coordinates_round_trip_through_table() {
        let t = CompositionTable::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 1.0, 2.0]]).unwrap();
        let z = CoordinateMatrix::ilr_sequential(&t);
        let back = z.to_table(t.row_ids().to_vec()).unwrap();
        let closed = t.closed();
        for i in 0..2 {
            assert!(close_to(&back.row_parts(i), &closed.row_parts(i), 1e-14));
        }
        let clr = CoordinateMatrix::clr(&t);
        for row in clr.values().row_iter() {
            assert!(row.sum().abs() < 1e-14);
        }
        assert!(clr.to_table(vec!["a".into(), "b".into()]).is_err());
    }
}
