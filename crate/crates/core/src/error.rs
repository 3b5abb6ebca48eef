use thiserror::Error;

use crate::plant::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A non-finite value reached a map that is only defined on finite reals.
    #[error("{what}: value {value} is outside the domain (finite reals required)")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    /// A computation left the finite region; carries the simulation time
    /// stamp when one applies.
    #[error("divergence{}: {message}", time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    Divergence { time: Option<f64>, message: String },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    /// Controller parameters violate their feasibility conditions and the
    /// caller did not force the run.
    #[error("infeasible controller parameters: {0}")]
    Infeasible(String),

    #[error("unknown builtin scenario {0:?}")]
    UnknownScenario(String),

    #[error("missing bound evaluator: {0}")]
    MissingBound(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
