use thiserror::Error;

/// Errors raised anywhere in the recovery pipeline.
#[derive(Debug, Error)]
pub enum LsbmError {
    #[error("malformed parameters: {0}")]
    BadShape(String),
    #[error("label distribution q[{i}][{j}] sums to {sum}, expected 1")]
    NonStochastic { i: usize, j: usize, sum: f64 },
    #[error("q[{i}][{j}][{label}] differs from q[{j}][{i}][{label}]")]
    AsymmetricQ { i: usize, j: usize, label: usize },
    #[error("invalid community prior: {0}")]
    BadPi(String),
    #[error("t*log(n)/n = {value} exceeds 1 (t = {t}, n = {n})")]
    SignalTooLarge { t: f64, n: usize, value: f64 },
    #[error("q[{i}][{j}][{label}] is zero but the parameters are not flagged fully informative")]
    ZeroProbability { i: usize, j: usize, label: usize },
    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("communities {i} and {j} are indistinguishable (divergence {divergence:e})")]
    DegenerateParams { i: usize, j: usize, divergence: f64 },
    #[error("eigensolver did not converge: {converged}/{wanted} pairs after {iterations} matrix products")]
    ConvergenceFailure {
        iterations: usize,
        converged: usize,
        wanted: usize,
    },
    #[error("label {label}: only {found} of {wanted} eigenvalues are nonzero")]
    RankDeficient {
        label: usize,
        found: usize,
        wanted: usize,
    },
    #[error("log of zero probability q[{i}][{j}][{label}]")]
    LogOfZero { i: usize, j: usize, label: usize },
    #[error("weights for community {community}, label {label} leave residual {residual:e} (|z| = {norm:e})")]
    SpanViolation {
        community: usize,
        label: usize,
        residual: f64,
        norm: f64,
    },
    #[error("k = {0} exceeds the permutation enumeration bound of 8")]
    KTooLarge(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LsbmError>;
