use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("E = {0} lies outside the Fredholm domain E > 0")]
    OutsideFredholmDomain(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian near E = {0}; use the bordered solver")]
    NearBifurcation(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("-Δ+V has no negative eigenvalue; no linear bound state to bifurcate from")]
    NoLinearBoundState,

    #[error("continuation stalled at arclength {arclength:.3e}: {reason}")]
    Stalled { arclength: f64, reason: String },

    #[error("branch switching failed: {0}")]
    SwitchFailed(String),

    #[error("branch spans too small an E range: {0}")]
    InsufficientRange(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("blow-up detected at t = {t:.4}")]
    BlowUp { t: f64 },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!(
            "{what}: length {got}, expected {want}"
        )));
    }
    Ok(())
}
