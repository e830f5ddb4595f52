use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown atom `{0}`")]
    UnknownAtom(String),

    #[error("malformed filtration at atom `{atom}`: {reason}")]
    MalformedFiltration { atom: String, reason: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix is indefinite beyond tolerance (min eigenvalue {min_eigenvalue:e})")]
    IndefiniteBeyondTolerance { min_eigenvalue: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularOrIllConditioned { condition: f64 },

    #[error("leaf `{leaf}` is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NonPositiveLeaf { leaf: String, min_eigenvalue: f64 },

    #[error("average over atom `{atom}` is not positive definite: {source}")]
    NonPdAverage {
        atom: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("objects live on different filtrations")]
    FiltrationMismatch,

    #[error("domination certificate violated at leaf `{leaf}`: ratio {ratio} > constant {constant}")]
    CertificateViolation {
        leaf: String,
        ratio: f64,
        constant: f64,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
