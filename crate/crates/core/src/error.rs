use thiserror::Error;

use crate::time::Picos;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Path notation outside `D S (I S)* D`. `position` is 1-based; a
    /// position one past the end means the text ended early.
    #[error("path notation grammar error at position {position}: {message}")]
    Grammar { position: usize, message: String },

    #[error("capability mismatch: {0}")]
    CapabilityMismatch(String),

    #[error("links do not form a closed source/BSA loop: {0}")]
    NotACycle(String),

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("variable '{id}' value {value} outside [{lo}, {hi}]")]
    BoundsViolation {
        id: String,
        value: Picos,
        lo: Picos,
        hi: Picos,
    },

    #[error("unknown link '{0}'")]
    UnknownLink(String),

    #[error("unknown node '{0}'")]
    UnknownNode(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("baseline timing is infeasible; a cascade needs a solved baseline")]
    BaselineInfeasible,

    /// Malformed scenario text: bad syntax or a value of the wrong shape.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("need {needed} heralds, only {available} available")]
    InsufficientHeralds { needed: usize, available: usize },

    #[error("buffer '{0}' already holds a photon")]
    BufferOccupied(String),

    #[error("buffer '{0}' is empty")]
    BufferEmpty(String),
}
