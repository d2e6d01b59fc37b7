use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} {value} out of range ({range})")]
    OutOfRange { what: &'static str, value: i64, range: String },

    #[error("component of {pixels} px is below the minimum grain area of {min} px")]
    TooSmall { pixels: usize, min: usize },

    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    ShapeMismatch { shape: Vec<usize>, expected: usize, actual: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
