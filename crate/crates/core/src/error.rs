use thiserror::Error;

/// Protocol and encoding errors across the core modules.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("duplicate public key in signer set")]
    DuplicateKey,
    #[error("counter replay: counter {presented} not above stored {stored}")]
    CounterReplay { presented: u64, stored: u64 },
    #[error("counters in share set disagree")]
    CounterMismatch,
    #[error("signer {0} is not a member of the set")]
    NotAMember(u16),
    #[error("unknown signer {0}")]
    UnknownSigner(u16),
    #[error("aggregator tampering detected: published commitment for signer {signer} does not match local derivation")]
    AggregatorTampering { signer: u16 },
    #[error("commitment vector inconsistent with global commitment")]
    CommitmentVectorInvalid,
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("share set invalid: {0}")]
    ShareSetInvalid(String),
    #[error("threshold unmet: have {have}, need at least {need}")]
    ThresholdUnmet { have: usize, need: usize },
    #[error("verifiable secret sharing complaint raised; protocol restart required")]
    DkgRestartRequired,
    #[error("insufficient valid shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("invalid party index: {0}")]
    InvalidIndex(String),
    #[error("fallback coordination incomplete: signer {0} unreachable")]
    FallbackIncomplete(u16),
    #[error("invalid scalar: {0}")]
    InvalidScalar(String),
    #[error("discrete-log brute force is only available on the test backend")]
    BruteForceUnavailable,
    #[error("decode error: {0}")]
    Decode(String),
}
