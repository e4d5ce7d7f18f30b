use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodaError {
    #[error("part {index} is not strictly positive ({value})")]
    NonPositivePart { index: usize, value: f64 },
    #[error("a composition needs at least 2 parts, got {parts}")]
    TooFewParts { parts: usize },
    #[error("expected {expected} component labels, got {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("compositions have different component labels")]
    LabelMismatch,
    #[error("basis expects {expected} coordinates, got {found}")]
    BasisMismatch { expected: usize, found: usize },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("need at least {required} rows, got {rows}")]
    InsufficientRows { rows: usize, required: usize },
    #[error("duplicate row id `{0}`")]
    DuplicateRowId(String),
    #[error("row {row} has {found} parts, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobustError {
    #[error("every candidate subset has a singular covariance matrix")]
    SingularSubset,
    #[error("need more observations than variables (n = {n}, p = {p})")]
    Dimension { n: usize, p: usize },
    #[error("subset size h = {h} outside [{min}, {max}]")]
    SubsetSize { h: usize, min: usize, max: usize },
    #[error("retained predictor block is rank deficient")]
    DegenerateDesign,
    #[error("trim fraction {0} outside [0, 0.5]")]
    TrimFraction(f64),
    #[error("predictor/response length mismatch ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error(transparent)]
    Coda(#[from] CodaError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImputeError {
    #[error("row {0} is entirely missing")]
    EmptyRow(usize),
    #[error("column {0} is entirely missing")]
    EmptyColumn(usize),
    #[error("no complete rows available for nearest-neighbour initialisation")]
    NoCompleteRows,
    #[error("observed cell ({row}, {col}) is not strictly positive")]
    NonPositive { row: usize, col: usize },
    #[error("imputation did not converge; cells still changing: {cells:?}")]
    NonConvergent { cells: Vec<(usize, usize)> },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("history for ({entity}, {component}) invalid: {reason}")]
    InvalidHistory {
        entity: String,
        component: String,
        reason: String,
    },
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Coda(#[from] CodaError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("invalid cluster count K = {k} for n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("distance matrix must be square, symmetric, zero-diagonal")]
    InvalidDistance,
    #[error("need more observations for a full-covariance mixture (n = {n}, K = {k}, dim = {dim})")]
    TooFewForMixture { n: usize, k: usize, dim: usize },
    #[error("partitions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcaError {
    #[error("all rows are identical; no variance to decompose")]
    DegenerateData,
    #[error("need at least {required} rows, got {rows}")]
    InsufficientRows { rows: usize, required: usize },
    #[error("PCA needs ilr coordinates with a known pivot basis")]
    NotIlr,
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Coda(#[from] CodaError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsneError {
    #[error("perplexity {perplexity} must lie in (1, {n})")]
    Perplexity { perplexity: f64, n: usize },
    #[error("cannot reach the target perplexity for point {0}")]
    PerplexityUnreachable(usize),
    #[error("distance matrix must be square, symmetric, zero-diagonal")]
    InvalidDistance,
    #[error("embedding diverged at iteration {0}")]
    NumericalOverflow(usize),
    #[error("initial embedding must be {n} x 2")]
    InitShape { n: usize },
}
