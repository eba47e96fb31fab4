use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("irregular sampling: {0}")]
    IrregularSampling(String),

    #[error("series {id}: gap of {len} samples starting at index {start} exceeds max_gap")]
    GapTooLarge { id: String, start: usize, len: usize },

    #[error("series time ranges do not overlap")]
    NoOverlap,

    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("bandwidth selection failed: {0}")]
    BandwidthFailure(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("isoperimetric inequality violated for {id}: N*I = {product}")]
    IsoperimetricViolation { id: String, product: f64 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("exactly one series has zero complexity ({0})")]
    DegenerateComplexity(String),

    #[error("pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid number of clusters: {0}")]
    InvalidK(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag, used in run reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedInput(_) => "MalformedInput",
            Error::IrregularSampling(_) => "IrregularSampling",
            Error::GapTooLarge { .. } => "GapTooLarge",
            Error::NoOverlap => "NoOverlap",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::DegenerateSample(_) => "DegenerateSample",
            Error::BandwidthFailure(_) => "BandwidthFailure",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::IsoperimetricViolation { .. } => "IsoperimetricViolation",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::DegenerateComplexity(_) => "DegenerateComplexity",
            Error::Pair { source, .. } => source.kind(),
            Error::InvalidK(_) => "InvalidK",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Config { .. } => "ConfigError",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
