use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector norm {norm} is too far from 1 to renormalize")]
    NotUnitNorm { norm: f64 },

    #[error("cannot normalize a zero or non-finite vector")]
    ZeroVector,

    #[error("degenerate posterior: prior direction and resultant cancel to the zero vector")]
    DegeneratePosterior,

    #[error("concentration overflow: resultant ratio {ratio} is too close to 1 for a finite kappa")]
    ConcentrationOverflow { ratio: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported dimension: simplex ETF with K = {k} needs p >= {}, got p = {p}", k - 1)]
    UnsupportedDimension { k: usize, p: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {k} classes")]
    InvalidLabel { label: usize, k: usize },

    #[error("classifier carries no fit statistics")]
    NotFitted,

    #[error("non-finite training loss at epoch {epoch}, step {step} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, step: usize, last_loss: f64 },

    #[error("root finding did not converge: {0}")]
    NoConvergence(&'static str),

    #[error("bad magic bytes in feature file {}", path.display())]
    BadMagic { path: PathBuf },

    #[error("unsupported feature file version {version}")]
    UnsupportedVersion { version: u32 },

    #[error("feature file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("label {label} at row {row} is out of range for K = {k}")]
    LabelOutOfRange { row: usize, label: u32, k: u32 },

    #[error("malformed feature data: {0}")]
    Malformed(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{method} (seed {seed}): {source}")]
    Context {
        method: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Attach the experiment method and seed to an error.
    pub fn with_context(self, method: impl Into<String>, seed: u64) -> Self {
        Error::Context { method: method.into(), seed, source: Box::new(self) }
    }

    /// True when the root cause is a filesystem failure rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Context { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
