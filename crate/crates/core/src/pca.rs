//! Classical and robust principal component analysis of ilr coordinates.
//!
//! Components are computed in ilr space and mapped to clr space for
//! biplots, where each loading row belongs to one original part. Each
//! component's sign is fixed so that its largest-magnitude clr loading is
//! positive; the clr loadings do not depend on the ilr basis, so neither
//! does the sign.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::composition::CoordinateMatrix;
use crate::error::{CodaError, PcaError};
use crate::geometry::PivotBasis;
use crate::robust::{default_h, fast_mcd};

/// Robust wins the selection only if its ratio is larger by more than this.
pub const SELECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMethod {
    Classical,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub method: PcaMethod,
    /// (D-1) x p, orthonormal columns.
    #[serde(with = "crate::serde_matrix")]
    pub loadings_ilr: DMatrix<f64>,
    /// D x p, columns sum to zero.
    #[serde(with = "crate::serde_matrix")]
    pub loadings_clr: DMatrix<f64>,
    /// n x p.
    #[serde(with = "crate::serde_matrix")]
    pub scores: DMatrix<f64>,
    /// Descending.
    pub variances: Vec<f64>,
    /// Share of the total variance carried by the first two components.
    pub explained_ratio_2pc: f64,
    /// Column means (classical) or MCD location (robust).
    pub center: Vec<f64>,
    pub basis: PivotBasis,
    pub component_labels: Vec<String>,
    /// MCD subset size, robust fits only.
    pub mcd_h: Option<usize>,
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.variances.len()
    }

    /// Share of the total variance carried by the first `k` components.
    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.variances.iter().sum();
        self.variances.iter().take(k).sum::<f64>() / total
    }

    pub fn cumulative_ratios(&self) -> Vec<f64> {
        (1..=self.components()).map(|k| self.explained_ratio(k)).collect()
    }

    /// Biplot markers for the first two components: rows are the scores
    /// scaled by `s^(alpha-1)`, columns the clr loadings scaled by
    /// `s^(1-alpha)`, with `s_k = sqrt((n-1) variance_k)`. `alpha = 0.5` is
    /// the symmetric biplot; rows x columns^T reproduces the rank-2 fit.
    pub fn biplot_coordinates(&self, alpha: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.scores.nrows();
        let k = self.components().min(2);
        let s: Vec<f64> = self.variances[..k]
            .iter()
            .map(|v| ((n.max(2) - 1) as f64 * v.max(0.0)).sqrt())
            .collect();
        let rows = DMatrix::from_fn(n, k, |i, c| {
            if s[c] > 0.0 {
                self.scores[(i, c)] * s[c].powf(alpha - 1.0)
            } else {
                0.0
            }
        });
        let cols = DMatrix::from_fn(self.loadings_clr.nrows(), k, |j, c| {
            self.loadings_clr[(j, c)] * s[c].powf(1.0 - alpha)
        });
        (rows, cols)
    }
}

fn ilr_parts(coords: &CoordinateMatrix) -> Result<(&DMatrix<f64>, PivotBasis), PcaError> {
    let basis = coords.basis().ok_or(PcaError::NotIlr)?.clone();
    Ok((coords.values(), basis))
}

/// Sorts eigenpairs descending, fixes signs and assembles the model.
#[allow(clippy::too_many_arguments)]
fn assemble(
    method: PcaMethod,
    data: &DMatrix<f64>,
    center: DVector<f64>,
    mut pairs: Vec<(f64, DVector<f64>)>,
    basis: PivotBasis,
    labels: Vec<String>,
    mcd_h: Option<usize>,
) -> PcaModel {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let dim = data.ncols();
    let p = pairs.len();
    let v = basis.contrast();
    let mut w = DMatrix::zeros(dim, p);
    for (k, (_, vec)) in pairs.iter().enumerate() {
        let clr = &v * vec;
        let lead = clr
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |b, (j, x)| if x.abs() > b.1.abs() { (j, *x) } else { b });
        let sign = if lead.1 < 0.0 { -1.0 } else { 1.0 };
        w.set_column(k, &(vec * sign));
    }
    let centered = DMatrix::from_fn(data.nrows(), dim, |i, j| data[(i, j)] - center[j]);
    let scores = &centered * &w;
    let loadings_clr = &v * &w;
    let variances: Vec<f64> = pairs.iter().map(|(l, _)| l.max(0.0)).collect();
    let total: f64 = variances.iter().sum();
    PcaModel {
        method,
        explained_ratio_2pc: variances.iter().take(2).sum::<f64>() / total,
        loadings_ilr: w,
        loadings_clr,
        scores,
        variances,
        center: center.iter().copied().collect(),
        basis,
        component_labels: labels,
        mcd_h,
    }
}

/// PCA by SVD of the column-centred coordinates; variances `d^2 / (n-1)`,
/// `min(n, D-1)` components.
pub fn pca_classical(coords: &CoordinateMatrix) -> Result<PcaModel, PcaError> {
    let (z, basis) = ilr_parts(coords)?;
    let (n, dim) = z.shape();
    if n < 2 {
        return Err(PcaError::InsufficientRows { rows: n, required: 2 });
    }
    let center = DVector::from_fn(dim, |j, _| z.column(j).mean());
    let centered = DMatrix::from_fn(n, dim, |i, j| z[(i, j)] - center[j]);
    let scale = centered.amax();
    if scale == 0.0 {
        return Err(PcaError::DegenerateData);
    }
    let svd = centered.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let pairs: Vec<(f64, DVector<f64>)> = (0..svd.singular_values.len())
        .map(|k| {
            let d = svd.singular_values[k];
            (d * d / (n - 1) as f64, vt.row(k).transpose())
        })
        .collect();
    Ok(assemble(
        PcaMethod::Classical,
        z,
        center,
        pairs,
        basis,
        coords.component_labels().to_vec(),
        None,
    ))
}

/// PCA from the eigendecomposition of the MCD scatter (default subset
/// size); scores are centred on the MCD location.
pub fn pca_robust(coords: &CoordinateMatrix, seed: u64) -> Result<PcaModel, PcaError> {
    let (z, basis) = ilr_parts(coords)?;
    let (n, dim) = z.shape();
    if n <= dim {
        return Err(PcaError::InsufficientRows {
            rows: n,
            required: dim + 1,
        });
    }
    let h = default_h(n, dim);
    let est = fast_mcd(z, h, seed)?;
    let eig = SymmetricEigen::new(est.covariance.clone());
    let pairs: Vec<(f64, DVector<f64>)> = (0..dim)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
        .collect();
    if pairs.iter().all(|p| p.0 <= 0.0) {
        return Err(PcaError::DegenerateData);
    }
    Ok(assemble(
        PcaMethod::Robust,
        z,
        DVector::from_vec(est.location.clone()),
        pairs,
        basis,
        coords.component_labels().to_vec(),
        Some(h),
    ))
}

/// First two clr loading vectors (D x 2) of `model` expressed through
/// `basis`, which must be the basis the model was fitted in.
pub fn biplot_loadings_clr(model: &PcaModel, basis: &PivotBasis) -> Result<DMatrix<f64>, PcaError> {
    if basis.dim() != model.loadings_ilr.nrows() {
        return Err(CodaError::BasisMismatch {
            expected: model.loadings_ilr.nrows(),
            found: basis.dim(),
        }
        .into());
    }
    let k = model.components().min(2);
    Ok(basis.contrast() * model.loadings_ilr.columns(0, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSelection {
    pub selected: PcaMethod,
    pub classical_ratio: f64,
    pub robust_ratio: f64,
    pub classical: PcaModel,
    pub robust: PcaModel,
}

impl PcaSelection {
    pub fn model(&self) -> &PcaModel {
        match self.selected {
            PcaMethod::Classical => &self.classical,
            PcaMethod::Robust => &self.robust,
        }
    }
}

/// Fits both and keeps the one with the higher two-component explained
/// ratio; classical wins ties within [`SELECTION_TOLERANCE`].
pub fn select_pca(coords: &CoordinateMatrix, seed: u64) -> Result<PcaSelection, PcaError> {
    let classical = pca_classical(coords)?;
    let robust = pca_robust(coords, seed)?;
    let (c, r) = (classical.explained_ratio_2pc, robust.explained_ratio_2pc);
    Ok(PcaSelection {
        selected: if r > c + SELECTION_TOLERANCE {
            PcaMethod::Robust
        } else {
            PcaMethod::Classical
        },
        classical_ratio: c,
        robust_ratio: r,
        classical,
        robust,
    })
}
