use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate entropy")]
    DegenerateEntropy,
    #[error("singular transform (|det| = {0:e})")]
    Singular(f64),
    #[error("diffeomorphism violated (min Jacobian determinant {0})")]
    DiffeomorphismViolated(f64),
    #[error("missing counterpart sections: {0:?}")]
    MissingCounterpart(Vec<u32>),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("landmarks: {0}")]
    Landmarks(String),
    #[error("registration failed: {0}")]
    Registration(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    ImageIo {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
