//! Robust estimation: FAST-MCD, least trimmed squares and the robust
//! variation matrix.

mod lts;
mod mcd;
mod variation;

pub use lts::{lts_regression, lts_regression_with, retained_count, LtsFit, LtsOptions};
pub use mcd::{
    consistency_factor, default_h, fast_mcd, fast_mcd_with, mcd_univariate, min_h,
    robust_distances, McdOptions, McdTrace, RobustEstimate,
};
pub use variation::{
    robust_scale, variation_matrix_robust, variation_matrix_robust_with, RobustVariationOptions,
    UnivariateScale,
};
