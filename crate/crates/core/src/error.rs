use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: out-of-range tokens, mismatched lengths,
    /// invalid parameter values.
    #[error("input error: {0}")]
    Input(String),

    /// A model document violates the file format contract.
    #[error("model format error: {0}")]
    Format(String),

    /// A distribution has no token left to sample from.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// A proposal carries a token the reference model assigns zero
    /// probability; density ratios against it are undefined.
    #[error("invalid proposal: {0}")]
    InvalidProposal(String),

    /// An operation was called in the wrong weight mode (e.g. logsumexp
    /// aggregation with non-positive weights).
    #[error("weight mode error: {0}")]
    Mode(String),

    /// Sequence-level rejection sampling exhausted its retry budget.
    #[error("envelope too tight: {0}")]
    EnvelopeTooTight(String),

    /// Decoding cannot make progress: every candidate has zero reward.
    #[error("progress stalled: {0}")]
    ProgressStall(String),

    /// Brute-force enumeration would exceed the tractability guard.
    #[error("enumeration guard: {0}")]
    EnumerationGuard(String),

    /// The target distribution has zero total mass.
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),

    /// Remote endpoint unreachable: connect failure, timeout, or 5xx.
    #[error("transport error: {0}")]
    Transport(String),

    /// Remote endpoint answered with a malformed or rejected (4xx) response.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A truncated remote response leaves too much probability mass
    /// unaccounted for.
    #[error("fidelity error: {0}")]
    Fidelity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
