use alloc::string::String;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("non-finite logit at state {state}, action {action}")]
    NonFiniteLogit { state: usize, action: usize },

    #[error("invalid occupancy: {0}")]
    InvalidOccupancy(String),

    #[error("shape mismatch: expected {expected:?} (states, actions), found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite {quantity} at update {update}")]
    NonFinite { quantity: &'static str, update: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
