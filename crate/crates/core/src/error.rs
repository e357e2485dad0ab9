use thiserror::Error;

/// Errors raised by constructors, payment rules and the oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("invalid type space: {0}")]
    InvalidTypeSpace(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("table shape does not match the instance: {0}")]
    ShapeMismatch(String),

    #[error("negative perceived payment {value:e} for bidder {bidder} at index {index}")]
    NegativeRadicand {
        bidder: usize,
        index: usize,
        value: f64,
    },

    #[error("instance has {vars} free allocation variables, above the cap of {cap}")]
    TooLarge { vars: usize, cap: usize },

    #[error("solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, AuctionError>;
