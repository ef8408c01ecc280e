//! Partially interactive multi-signatures and (t, n)-threshold signatures
//! coordinated by a trusted aggregator.
//!
//! Signers never talk to each other: nonces are derived deterministically
//! from pre-shared seeds, the aggregator publishes the full commitment
//! vector alongside the global commitment, and per-set monotonic counters
//! keep nonces unique.  Signatures have a constant-size (R, c, s) core no
//! matter how many parties sign.

pub mod error;
pub mod group;
pub mod keyset;
pub mod multisig;
pub mod prf;
pub mod threshold;

pub use error::Error;
pub use group::{dlog_bruteforce, Backend, GroupElement, GroupParams, Scalar};
pub use keyset::{
    key_agg, setup, setup_with_rng, AggregatedKey, AggregatorSecrets, PublicParams, SignerIndex,
    SignerPacket, SignerSet,
};
pub use multisig::{
    combine, local_nonce, local_sign, verify, verify_share, CommitmentBundle, MultiSignature,
    RejectReason, SignatureShare, Verdict, VerifierState,
};
pub use prf::{hash_challenge, key_order, msg_digest, prf, seed_refresh, DomainTag, Seed};
pub use threshold::{
    dkg_deal, dkg_finalize, dkg_verify_share, lagrange_at_zero, reconstruct, run_dkg,
    threshold_commitment, threshold_local_sign, verify_threshold, verify_threshold_share,
    Complaint, DealerOutput, Polynomial, ThresholdParams, ThresholdShare,
};
