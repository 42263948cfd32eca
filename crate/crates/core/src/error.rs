use thiserror::Error;

/// Errors raised by the transforms, coders and container.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("bit depth {0} outside the supported range 8..=16")]
    BitDepth(u8),

    #[error("sample {value} at ({row}, {col}) exceeds {bit_depth}-bit range")]
    SampleRange {
        row: usize,
        col: usize,
        value: i64,
        bit_depth: u8,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular or ill-conditioned (condition number {0:.3e})")]
    SingularMatrix(f64),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("coefficient {0} exceeds the coder range of +/-2^24")]
    CoefficientRange(i64),

    #[error("corrupt payload at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },

    #[error("stream truncated at byte {0}")]
    Truncated(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
