use thiserror::Error;

pub type Result<T, E = UlcaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum UlcaError {
    #[error("group {0} has no members")]
    EmptyGroup(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    #[error("trace-ratio denominator vanished on the current subspace; increase gamma1")]
    SingularDenominator,

    #[error("axis vector has zero length")]
    ZeroVector,

    #[error("area must be strictly positive (group {0})")]
    NonPositiveArea(usize),

    #[error("unknown snapshot `{0}`")]
    UnknownSnapshot(String),

    #[error("snapshot `{0}` already exists")]
    DuplicateName(String),

    #[error("snapshot does not belong to the loaded dataset")]
    DatasetMismatch,

    #[error("malformed snapshot: {0}")]
    BadSnapshot(String),

    #[error("operation cancelled")]
    Cancelled,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl UlcaError {
    /// Stable upper-case code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            UlcaError::EmptyGroup(_) => "EMPTY_GROUP",
            UlcaError::NonFiniteInput { .. } => "NON_FINITE_INPUT",
            UlcaError::InvalidDataset(_) => "INVALID_DATASET",
            UlcaError::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            UlcaError::InvalidParams(_) => "INVALID_PARAMS",
            UlcaError::EigenFailure => "EIGEN_FAILURE",
            UlcaError::SingularDenominator => "SINGULAR_DENOMINATOR",
            UlcaError::ZeroVector => "ZERO_VECTOR",
            UlcaError::NonPositiveArea(_) => "NON_POSITIVE_AREA",
            UlcaError::UnknownSnapshot(_) => "UNKNOWN_SNAPSHOT",
            UlcaError::DuplicateName(_) => "DUPLICATE_NAME",
            UlcaError::DatasetMismatch => "DATASET_MISMATCH",
            UlcaError::BadSnapshot(_) => "BAD_SNAPSHOT",
            UlcaError::Cancelled => "CANCELLED",
            UlcaError::Csv(_) => "BAD_DATA",
            UlcaError::Io(_) => "IO",
        }
    }
}
