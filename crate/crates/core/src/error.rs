use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum GnsError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("critical case unsupported: p = d/(d-2) = {p} for d = {d}")]
    CriticalCase { d: u32, p: f64 },

    #[error("non-integrable weight: tail exponent {tail_exponent} with weight r^{weight} (need tail_exponent + weight + d < 0)")]
    NonIntegrable { tail_exponent: f64, weight: i32 },

    #[error("numerical error in {what}: achieved {achieved:.3e}, required {required:.3e}")]
    Numerical { what: String, achieved: f64, required: f64 },

    #[error("vacuum region: profile vanishes at interior node r = {r}")]
    VacuumRegion { r: f64 },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("stiffness error at t = {t}: dt fell below {dt_min} ({reason})")]
    Stiffness { t: f64, dt_min: f64, reason: String },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("trajectory not converged at t = {t}: f = {f:e} (increase t_max)")]
    NotConverged { t: f64, f: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GnsError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(GnsError::Domain(msg.into()))
}
