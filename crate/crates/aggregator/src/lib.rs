//! The trusted coordination service: seed vault, authenticated commitment
//! serving for both schemes, per-set counter policing, commitment-vector
//! publication, seed-refresh epochs, and the interactive fallback
//! coordinator for aggregator outages.

pub mod service;
pub mod state;
pub mod wire;

pub use service::{Client, ClientError, Server};
pub use state::{
    build_multisig_request, build_threshold_request, fallback_coordinate, verify_attestation,
    AggregatorState, AttestationQuote, CachedSession, CommitmentRelay, CommitmentRequest, Mode,
    RefreshToken,
};
