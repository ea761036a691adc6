use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("numerical decomposition failed: {0}")]
    Decomposition(&'static str),

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("stacked pilot matrix is rank deficient (gram condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{origin}: {message}")]
    Config {
        origin: crate::config::Origin,
        message: String,
    },

    #[error("{failed} of {total} trials failed (limit is 0.1%)")]
    CampaignFailed { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
