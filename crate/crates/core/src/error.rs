use thiserror::Error;

/// Errors shared by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error(
        "window too narrow: kernel needs a margin of {required} sites, window reserves {available}"
    )]
    WindowTooNarrow { required: usize, available: usize },

    #[error("step rejected at t={t}: |update|={update} exceeds {bound}")]
    StepRejected { t: f64, update: f64, bound: f64 },

    #[error("time {t} is not on the noise grid (dt={dt})")]
    Alignment { t: f64, dt: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage 1 exhausted: no site reached {level} by time {delta} in any of {replicates} replicates")]
    Stage1Exhausted {
        level: f64,
        delta: f64,
        replicates: usize,
    },

    #[error("golden mismatch in `{field}`: expected {expected}, got {actual}")]
    GoldenMismatch {
        field: String,
        expected: String,
        actual: String,
    },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
