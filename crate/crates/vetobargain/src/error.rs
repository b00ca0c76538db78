use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty belief: window [{lo}, {hi}] carries no mass")]
    EmptyBelief { lo: f64, hi: f64 },

    #[error("infeasible continuation value: w = {w} exceeds v^2 = {v_sq}")]
    InfeasibleContinuation { w: f64, v_sq: f64 },

    #[error(
        "mu_delta undefined at this δ ({delta}): skimming dominates leapfrogging at every belief"
    )]
    MuDeltaUndefined { delta: f64 },

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// True for errors that stem from a model hypothesis or precondition gate
    /// rather than from malformed input.
    pub fn is_gate(&self) -> bool {
        matches!(
            self,
            Error::MuDeltaUndefined { .. } | Error::Hypothesis(_) | Error::Precondition(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
