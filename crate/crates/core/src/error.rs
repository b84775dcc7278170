use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A probability argument sat on or outside the boundary of (0, 1).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A conditioning stratum needed by a nuisance fit had fewer than two
    /// rows. `stratum` reads like "no rows with t = 1".
    #[error("degenerate fold{}: {stratum}", fold.map(|k| format!(" {k}")).unwrap_or_default())]
    FoldDegenerate {
        fold: Option<usize>,
        stratum: String,
    },

    #[error(
        "coordinate descent did not converge after {iterations} cycles \
         (lambda = {lambda:.3e}, KKT residual = {kkt_residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        lambda: f64,
        kkt_residual: f64,
        intercept: f64,
        coefficients: Vec<f64>,
    },

    #[error("value {value} outside spline boundary [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a fold id to a degenerate-stratum error raised inside a fold.
    pub fn in_fold(self, k: usize) -> Self {
        match self {
            Error::FoldDegenerate { stratum, .. } => Error::FoldDegenerate {
                fold: Some(k),
                stratum,
            },
            other => other,
        }
    }
}
