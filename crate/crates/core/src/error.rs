use std::path::PathBuf;

use crate::lightfield::ViewIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),
    #[error("non-positive or non-finite inverse depth {0}")]
    NonPositiveInverseDepth(f64),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid light field: {0}")]
    InvalidLightField(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("missing view {0}")]
    MissingView(ViewIndex),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no valid pixels contribute to the loss")]
    EmptyMask,
    #[error("image dimensions {width}x{height} are not divisible by 2^{exponent}")]
    IndivisibleDims {
        width: usize,
        height: usize,
        exponent: usize,
    },
    #[error("optimization diverged at level {level}, iteration {iteration}")]
    Diverged { level: usize, iteration: usize },
    #[error("scene is textureless (intensity variance {0:e}); pose is unobservable")]
    EmptyGradient(f64),
    #[error("scene behind camera: {0}")]
    SceneBehindCamera(String),
    #[error("trajectory length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("estimation failed for frame pair ({prev}, {cur}): {source}")]
    Pair {
        prev: usize,
        cur: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("manifest error in {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("dimension mismatch in {path} (frame {frame}): {message}")]
    DimMismatch {
        path: PathBuf,
        frame: usize,
        message: String,
    },
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveDepth(_) => "NonPositiveDepth",
            Error::NonPositiveInverseDepth(_) => "NonPositiveInverseDepth",
            Error::InvalidImage(_) => "InvalidImage",
            Error::InvalidLightField(_) => "InvalidLightField",
            Error::InvalidIntrinsics(_) => "InvalidIntrinsics",
            Error::InvalidTransform(_) => "InvalidTransform",
            Error::MissingView(_) => "MissingView",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyMask => "EmptyMask",
            Error::IndivisibleDims { .. } => "IndivisibleDims",
            Error::Diverged { .. } => "Diverged",
            Error::EmptyGradient(_) => "EmptyGradient",
            Error::SceneBehindCamera(_) => "SceneBehindCamera",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::InvalidTrajectory(_) => "InvalidTrajectory",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Pair { source, .. } => source.kind(),
            Error::Manifest { .. } => "ManifestError",
            Error::MissingFile(_) => "MissingFile",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::Format { .. } => "FormatError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }
}
