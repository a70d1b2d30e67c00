use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport speed {field} is not positive at x = {x} (value {value})")]
    NonPositiveSpeed { field: String, x: f64, value: f64 },

    #[error("parameter {field} is not finite at x = {x}")]
    NonFinite { field: String, x: f64 },

    #[error("interpolation basis limited to n <= {max} channels, got n = {n}")]
    TooManyChannels { n: usize, max: usize },

    #[error(
        "kernel row update did not converge at x = {x} (row {row}) after {iterations} iterations, defect {defect:e}"
    )]
    KernelNonConvergence {
        row: usize,
        x: f64,
        iterations: usize,
        defect: f64,
    },

    #[error("time step {dt} violates CFL bound {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("norm sample at t = {t} is not positive; cannot fit exponential decay")]
    NonPositiveNorm { t: f64 },

    #[error("too few samples for fit: {got} < {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),

    #[error("unknown parameter set or file: {0}")]
    UnknownParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn mismatch(context: &'static str, left: impl ToString, right: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        left: left.to_string(),
        right: right.to_string(),
    }
}
