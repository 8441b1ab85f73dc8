//! Crate-wide error type.

/// Errors produced by the toolkit.
///
/// Note that a model fit that fails to converge is *not* an error: fitting
/// returns a result with `converged = false` and diagnostics. Errors are
/// reserved for invalid inputs and analytically hopeless situations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A named column or covariate is missing or mismatched.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell failed to parse, addressed by data row (1-based) and column.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A value violates a domain invariant (negative count, non-positive
    /// exposure, log of a non-positive value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite or otherwise unusable data, addressed where possible.
    #[error("data error: {0}")]
    Data(String),

    /// The observed information matrix is singular; names the offending
    /// parameters.
    #[error("singular Hessian involving column(s): {}", columns.join(", "))]
    SingularHessian { columns: Vec<String> },

    /// Vuong comparison between models with identical per-observation
    /// likelihoods.
    #[error("degenerate comparison: {0}")]
    DegenerateComparison(String),

    /// The pmf truncation cap was reached before the tail-mass budget.
    #[error("tail-mass budget exceeded at k = {k_max}: remaining mass bound {remaining:e}")]
    TailBudget { k_max: u64, remaining: f64 },

    /// Goodness-of-fit segmentation produced no usable bins.
    #[error("empty report: {0}")]
    EmptyReport(String),

    /// The pseudo-R² denominator is zero (all bin means equal).
    #[error("undefined denominator: {0}")]
    UndefinedDenominator(String),

    /// A request that the library cannot honor (bad configuration, wrong
    /// model family for an operation, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
