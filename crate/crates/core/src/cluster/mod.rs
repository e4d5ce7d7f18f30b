//! Clustering of observations (R-mode) and of components (Q-mode).
//!
//! R-mode methods take an n x p matrix of ilr coordinates, one observation
//! per row, used as is: rescaling the coordinates would break the Aitchison
//! geometry they carry.

mod gmm;
mod hierarchy;
mod kmeans;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ClusterError;

pub use gmm::{gmm_em, gmm_em_with, CovarianceModel, GmmFit, GmmOptions};
pub use hierarchy::{divisive_hierarchical, qmode_ward, ward_linkage, Dendrogram, Linkage, Merge};
pub use kmeans::{
    diagnostics, kmeans, kmeans_with, DiagnosticPoint, DiagnosticsCurve, KMeansFit, KMeansOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    KMeans,
    Divisive,
    Gmm,
    Ward,
}

/// Hard partition with ids `1..=k`, every id used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
    method: ClusterMethod,
    /// WSS for k-means, log-likelihood for mixtures, cut height for trees.
    objective: f64,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, method: ClusterMethod, objective: f64) -> Result<Self, ClusterError> {
        if labels.is_empty() {
            return Err(ClusterError::Empty);
        }
        let k = *labels.iter().max().unwrap();
        let mut used = vec![false; k];
        for &l in &labels {
            if l == 0 {
                return Err(ClusterError::InvalidK { k: 0, n: labels.len() });
            }
            used[l - 1] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(ClusterError::InvalidK { k, n: labels.len() });
        }
        Ok(Self {
            labels,
            k,
            method,
            objective,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn method(&self) -> ClusterMethod {
        self.method
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Zero-based labels, convenient for indexing.
    pub fn zero_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l - 1).collect()
    }
}

/// Renumbers arbitrary group ids to `1..=k` in order of first appearance.
pub fn relabel_by_first_appearance(groups: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    groups
        .iter()
        .map(|g| {
            let next = map.len() + 1;
            *map.entry(*g).or_insert(next)
        })
        .collect()
}

/// Euclidean distances between the rows of `points`.
pub fn euclidean_distances(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (points.row(i) - points.row(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

pub(crate) fn check_distance(dist: &DMatrix<f64>) -> Result<(), ClusterError> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(ClusterError::InvalidDistance);
    }
    for i in 0..n {
        if dist[(i, i)] != 0.0 {
            return Err(ClusterError::InvalidDistance);
        }
        for j in 0..i {
            let (a, b) = (dist[(i, j)], dist[(j, i)]);
            if !a.is_finite() || a < 0.0 || (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(ClusterError::InvalidDistance);
            }
        }
    }
    Ok(())
}

/// Per-point silhouette widths for zero-based `labels` under `dist`.
/// Points in singleton clusters score 0.
pub fn silhouette(dist: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<f64>, ClusterError> {
    let n = labels.len();
    if dist.nrows() != n || dist.ncols() != n {
        return Err(ClusterError::LengthMismatch(dist.nrows(), n));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    Ok((0..n)
        .map(|i| {
            let own = labels[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist[(i, j)];
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect())
}

pub fn mean_silhouette(dist: &DMatrix<f64>, labels: &[usize]) -> Result<f64, ClusterError> {
    let s = silhouette(dist, labels)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Adjusted Rand index between two partitions given as arbitrary ids.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(ClusterError::Empty);
    }
    let ra = relabel_by_first_appearance(a);
    let rb = relabel_by_first_appearance(b);
    let ka = *ra.iter().max().unwrap();
    let kb = *rb.iter().max().unwrap();
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in ra.iter().zip(&rb) {
        table[x - 1][y - 1] += 1;
    }
    let pairs = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&m| pairs(m)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|c| pairs(table.iter().map(|r| r[c]).sum()))
        .sum();
    let total = pairs(a.len() as u64);
    let expected = rows * cols / total.max(1.0);
    let max = 0.5 * (rows + cols);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(if ra == rb { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
