use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid squeezing parameter: {0}")]
    InvalidSqueeze(String),

    #[error("cutoff {cutoff} leaves tail norm {tail:e} above the {bound:e} bound")]
    Truncation { cutoff: u32, tail: f64, bound: f64 },

    #[error("ket {0} exceeds the occupation bound of the state")]
    KetOutOfRange(String),

    #[error("cannot combine states: {0}")]
    InvalidComposition(String),

    #[error("photon-number sector {0} has zero probability")]
    ImpossibleOutcome(u32),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("contamination ratio is undefined at r = 0")]
    UndefinedRatio,

    #[error("invalid source model: {0}")]
    InvalidSource(String),

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error("numeric validity: {0}")]
    Numeric(String),

    #[error("phase estimation: {0}")]
    Estimation(String),

    #[error("event log: {0}")]
    EventLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
