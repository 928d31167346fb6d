use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("negative quantity {0}")]
    NegativeQuantity(f64),
    #[error("non-finite quantity {0}")]
    NonFinite(f64),
    #[error("no buyers")]
    NoBuyers,
    #[error("no sellers")]
    NoSellers,
    #[error("no rights in circulation")]
    NoRights,
    #[error("offered volume is zero")]
    NoVolume,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("canonical rank {rank} out of range for {buyers} buyers")]
    InvalidRank { rank: usize, buyers: usize },
    #[error("invalid mechanism weights: {0}")]
    InvalidWeights(String),
    #[error("incomes are not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<MarketError>,
    },
}

impl MarketError {
    pub fn at_round(self, round: usize) -> Self {
        match self {
            e @ MarketError::Round { .. } => e,
            e => MarketError::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, MarketError>;
