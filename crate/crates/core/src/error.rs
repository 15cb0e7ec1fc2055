use thiserror::Error;

use crate::ode::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate indicator: scalar argument has zero variance")]
    DegenerateIndicator,

    #[error("degenerate prototypes: Q11 - 2 Q12 + Q22 = {0} is not positive")]
    DegeneratePrototypes(f64),

    #[error("inconsistent state: {0}")]
    InconsistentState(String),

    #[error("integration diverged at t = {time}: {reason}")]
    IntegrationDiverged {
        time: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("no sign change of the leading eigenvalue in [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("simulation produced non-finite weights in run {run} at step {step}")]
    NonFinite { run: usize, step: u64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors that stem from bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
