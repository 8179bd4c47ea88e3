use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("user placement failed after {attempts} resamples (pair distance bounds incompatible with area side {area_d} m)")]
    Placement { attempts: usize, area_d: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported {what} format version {found} (this build reads version {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("oracle budget exceeded: {evaluations} joint candidates > budget {budget}")]
    BudgetExceeded { evaluations: u128, budget: u64 },

    #[error("unknown goal `{0}` (valid goals: max-se, max-ee, min-pw)")]
    UnknownGoal(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Corrupt(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Corrupt(format!("{other:?}")),
        }
    }
}
