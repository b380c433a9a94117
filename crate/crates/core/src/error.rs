use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} is outside the stored window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("lipschitz violation at t = {t}: step length {step} exceeds bound {bound}")]
    LipschitzViolation { t: f64, step: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "influence rejected: speed bound sup psi(r)*r = {s} is not below the speed of light c = {c} (attained near r = {r})"
    )]
    SpeedOfLight { s: f64, c: f64, r: f64 },

    #[error("influence rejected: {0}")]
    InfluenceRejected(String),

    #[error("picard iteration did not converge after {iterations} iterations (last gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
