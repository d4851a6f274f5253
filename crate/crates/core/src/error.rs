use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, divisibility constraints, or hyper-parameters that cannot be honored.
    #[error("configuration error: {0}")]
    Config(String),

    /// The call itself is not valid for the given state (e.g. nothing left to decode).
    #[error("invalid call: {0}")]
    InvalidCall(String),

    /// A caller-side contract was broken (e.g. a verifier returned a reward outside [0, 1]).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Operations invoked out of order (e.g. advantages before rewards).
    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("numeric error at {node}: {detail}")]
    Numeric { node: String, detail: String },

    /// Exhaustive enumeration refused because it would be too expensive.
    #[error("enumeration cap exceeded: k = {k} > cap {cap} (naive cost {cost} forward passes)")]
    CapExceeded { k: usize, cap: usize, cost: u128 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidCall(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(node: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric { node: node.into(), detail: detail.into() }
    }
}
