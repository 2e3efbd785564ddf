use thiserror::Error;

use crate::model::{JointAction, JointObservation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generative step called on a terminal state")]
    TerminalStep,

    #[error("particle depletion on branch action={action:?} observation={observation:?}")]
    ParticleDepletion {
        action: JointAction,
        observation: JointObservation,
    },

    #[error("observation {observation:?} has zero probability after action {action:?}")]
    ImpossibleObservation {
        action: JointAction,
        observation: JointObservation,
    },

    #[error("information-set mixture has zero total weight")]
    EmptyMixture,

    #[error("enumeration too large: {count} exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("bound stipulation violated: {0}")]
    StipulationViolated(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
