use plr_core::formats::Checkpoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] plr_core::Error),

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A loss became non-finite. `last_good` holds the most recent snapshot
    /// taken while every loss was still finite.
    #[error("training diverged at step {step}: {what} loss is {value}")]
    Diverged {
        step: u64,
        what: &'static str,
        value: f64,
        last_good: Vec<Checkpoint>,
    },

    #[error(
        "oracle reached train accuracy {train:.4} and test accuracy {test:.4}, below the required {threshold:.4}"
    )]
    OracleBelowThreshold { train: f64, test: f64, threshold: f64 },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
