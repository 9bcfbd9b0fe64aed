use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rollout group too small: need at least {need}, got {got}")]
    GroupTooSmall { need: usize, got: usize },

    #[error("ESS floor {floor} exceeds group size {group}")]
    EssFloorTooHigh { floor: f64, group: usize },

    #[error("top-k selection of {k} from {len} rollouts")]
    TopKTooLarge { k: usize, len: usize },

    #[error("scaffold initialisation failed: {0}")]
    ScaffoldInit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown environment kind: {0}")]
    UnknownKind(String),

    #[error("event log error: {0}")]
    Log(String),

    #[error("event log gap: first missing sequence_no is {0}")]
    LogGap(u64),

    #[error("run error: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialisation error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
