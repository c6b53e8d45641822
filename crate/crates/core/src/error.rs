use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no sign change of n*L(x)/x^p - 1 on [1, 1e30]")]
    NoBracket,

    #[error("tail constants c1 + c2 must be positive")]
    DegenerateTails,

    #[error("quadrature did not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("replicas do not share a checkpoint grid")]
    GridMismatch,

    #[error("no return to the inducing set within {0} steps")]
    CapExceeded(u64),

    #[error("unsupported system for this operation: {0}")]
    UnsupportedSystem(String),

    #[error("no spectral gap: |l2/l1| estimate {0:.6}")]
    NoGap(f64),

    #[error("correlations do not decay over {0} terms")]
    NonSummable(usize),

    #[error("no contraction of L^n f over {0} terms")]
    NoDecay(usize),

    #[error("argument {value} outside the tabulated range [{lo}, {hi}]")]
    ExtrapolationOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("missing result bundle: {0}")]
    MissingBundle(String),

    #[error("config hash mismatch in {file}: expected {expected}, found {found}")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
