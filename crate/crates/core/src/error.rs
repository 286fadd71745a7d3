use thiserror::Error;

use crate::spacetime::ValueId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid qubit target: {0}")]
    InvalidTarget(String),

    #[error("register of {requested} qubits exceeds the configured maximum of {max}")]
    TooManyQubits { requested: usize, max: usize },

    #[error("state is not normalized (norm squared = {0})")]
    NotNormalized(f64),

    #[error("qubit {qubit} is entangled with the rest of the register")]
    NotProduct { qubit: usize },

    #[error(
        "causality violation: {actor} used {value} at t={at} but {}",
        match .known_since {
            Some(t) => format!("it is only knowable there from t={t}"),
            None => "it never reached that actor".to_string(),
        }
    )]
    Causality {
        actor: String,
        value: ValueId,
        at: f64,
        known_since: Option<f64>,
    },

    #[error("{actor} does not hold qubit {qubit} of register {register}")]
    NotOwner {
        actor: String,
        register: usize,
        qubit: usize,
    },

    #[error("event scheduled in the past: t={requested} < now={now}")]
    PastEvent { requested: f64, now: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed announcement: {0}")]
    MalformedAnnouncement(String),

    #[error("insufficient pre-shared entanglement: need {needed} pairs, have {available}")]
    InsufficientEntanglement { needed: usize, available: usize },

    #[error("trial {index} failed: {source}")]
    Trial {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_causality_violation(&self) -> bool {
        match self {
            Error::Causality { .. } => true,
            Error::Trial { source, .. } => source.is_causality_violation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
