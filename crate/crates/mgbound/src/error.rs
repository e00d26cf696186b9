use thiserror::Error;

/// Errors surfaced by matrix construction, factorizations, and the
/// analysis pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max|S - S^T| = {max_asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    #[error("matrix is not SPD: Cholesky failed at pivot {pivot}")]
    NotSpd { pivot: usize },

    #[error("matrix is not numerically SPD: lambda_min = {lambda_min:.3e} vs lambda_max = {lambda_max:.3e}")]
    NotNumericallySpd { lambda_min: f64, lambda_max: f64 },

    #[error("matrix is not SPSD: eigenvalue {lambda:.3e} below tolerance {tol:.3e}")]
    NotSpsd { lambda: f64, tol: f64 },

    #[error("matrix is numerically zero: no eigenvalue above threshold {threshold:.3e}")]
    ZeroMatrix { threshold: f64 },

    #[error("eigensolver failed to converge at index {index}")]
    EigNoConvergence { index: usize },

    #[error("singular matrix in LU solve at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dense analysis refused: n = {n} exceeds cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("smoother is not A-convergent: M + M^T - A is not SPD")]
    NotAConvergent,

    #[error("prolongation is rank deficient: sigma_min/sigma_max = {ratio:.3e}")]
    RankDeficient { ratio: f64 },

    #[error("coarse set is empty: every point was labeled fine")]
    EmptyCoarseSet,

    #[error("coarsening stalled at level {level}: size {n} did not decrease")]
    CoarseningStalled { level: usize, n: usize },

    #[error("hierarchy not A-convergent at level {level}: spectral radius {rho:.6} >= 1")]
    HierarchyDivergent { level: usize, rho: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
