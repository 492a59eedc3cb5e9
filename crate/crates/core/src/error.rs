use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dims {dims:?}: {reason}")]
    InvalidDims { dims: [usize; 5], reason: &'static str },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("{0}")]
    Format(String),

    /// Header dims that parse but violate the array invariants.
    #[error("dims {dims:?} rejected on load: {reason} (use the foreign-dims override to inspect)")]
    Dims { dims: [usize; 5], reason: &'static str },

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("inverse transform needs odd pixel dims, got n_s={n_s}, n_t={n_t}")]
    EvenPixelDims { n_s: usize, n_t: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("invalid element at offset {offset}: {value}")]
    InvalidValue { offset: usize, value: f64 },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("verification failed: {0}")]
    VerificationFailure(String),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable short name used in CLI diagnostics.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::InvalidDims { .. } => "InvalidDims",
            Error::Io(_) => "IoError",
            Error::Format(_) => "FormatError",
            Error::Dims { .. } => "DimsError",
            Error::Index { .. } => "IndexError",
            Error::EvenPixelDims { .. } => "EvenPixelDims",
            Error::DimMismatch(_) => "DimMismatch",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::LayoutMismatch(_) => "LayoutMismatch",
            Error::VerificationFailure(_) => "VerificationFailure",
            Error::Config(_) => "ConfigError",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
