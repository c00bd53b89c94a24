use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("optimizer initialization failed: {0}")]
    Initialization(String),
    #[error("filtering failed at t = {t}: {reason}")]
    Filtering { t: usize, reason: String },
    #[error("smoothing failed at t = {t}: {reason}")]
    Smoothing { t: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(msg()))
    }
}
