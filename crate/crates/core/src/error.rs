use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("cell count {actual} does not match {width}x{height}")]
    CellCountMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },

    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),

    #[error("non-square cells are not supported (dx={dx}, dy={dy})")]
    NonSquareCells { dx: f64, dy: f64 },

    #[error("rotated or sheared geotransforms are not supported")]
    RotatedGeoTransform,

    #[error("CRS mismatch: fine grid is {fine:?}, coarse grid is {coarse:?}")]
    CrsMismatch { fine: String, coarse: String },

    #[error("coarse cell size {coarse} is not an integer multiple of fine cell size {fine}")]
    NonIntegerRatio { coarse: f64, fine: f64 },

    #[error("grid origins differ by ({dx}, {dy}) m, tolerance is {tolerance} m")]
    OriginMisaligned { dx: f64, dy: f64, tolerance: f64 },

    #[error("fine raster ({width}x{height}) cannot hold a single {factor}x{factor} tile")]
    NoCompleteTile {
        width: usize,
        height: usize,
        factor: usize,
    },

    #[error("tile ({i}, {j}) out of bounds for a {tiles_y}x{tiles_x} plan")]
    TileOutOfBounds {
        i: usize,
        j: usize,
        tiles_y: usize,
        tiles_x: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} required")]
    MissingInput(&'static str),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for bad input or configuration,
    /// 1 for failures inside the tool itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            _ => 2,
        }
    }
}
