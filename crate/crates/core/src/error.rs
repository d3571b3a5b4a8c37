use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: lower bound {lo} must be below upper bound {hi}")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point {x} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("penalty order {m} exceeds spline degree {degree}")]
    InvalidPenaltyOrder { m: usize, degree: usize },

    #[error("derivative order {requested} exceeds spline degree {degree}; refit with a spline of degree >= {requested}")]
    InvalidOrder { requested: usize, degree: usize },

    #[error("singular fit: {}", describe_singular(.empty_span))]
    SingularFit { empty_span: Option<(f64, f64)> },

    #[error("measured series has zero range; NRMSE is undefined")]
    DegenerateRange,

    #[error("partition {index} has B = 0 and carries no dynamics")]
    NonDynamicPartition { index: usize },

    #[error("model step {model} s does not match trace step {trace} s")]
    DtMismatch { model: f64, trace: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("unknown file schema in {path}: header `{header}`")]
    UnknownSchema { path: PathBuf, header: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn describe_singular(span: &Option<(f64, f64)>) -> String {
    match span {
        Some((a, b)) => format!("knot span [{a}, {b}) contains no data"),
        None => "normal equations are rank deficient".to_string(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
