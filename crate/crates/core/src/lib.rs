//! Compositional data analysis toolkit.
//!
//! Tables of strictly positive parts are analysed through log-ratio
//! coordinates: pivot ilr coordinates for clustering, PCA and embedding,
//! clr coefficients for biplots, and pairwise log-ratio variances for
//! grouping the components themselves.
//!
//! - [`composition`] / [`geometry`]: closure, clr/ilr/alr, Aitchison distance,
//!   center and the classical variation matrix.
//! - [`robust`]: FAST-MCD, LTS regression and the robust variation matrix.
//! - [`impute`]: trend-based and iterative KNN + LTS imputation.
//! - [`cluster`]: k-means, divisive and Ward hierarchies, Gaussian mixtures,
//!   silhouette and adjusted Rand index.
//! - [`pca`]: classical and MCD-based PCA with clr biplot loadings.
//! - [`tsne`]: exact t-SNE.

pub mod cluster;
pub mod composition;
pub mod error;
pub mod geometry;
pub mod impute;
pub mod pca;
mod linalg;
pub mod robust;
pub mod seed;
pub mod serde_matrix;
pub mod tsne;

pub use composition::{
    aitchison_distance, center, closure, ilr_inverse, variation_matrix_classical, Composition,
    CompositionTable, CoordKind, CoordinateMatrix, VariationMatrix, VariationMethod,
};
pub use error::{ClusterError, CodaError, ImputeError, PcaError, RobustError, TsneError};
pub use geometry::PivotBasis;
