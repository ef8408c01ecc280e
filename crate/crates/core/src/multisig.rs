//! Two-phase multi-signature: deterministic commitment bundles, local
//! non-interactive share generation with consistency checks, share
//! combination, and verification with counter freshness.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Error;
use crate::group::{product, Backend, GroupElement, Scalar};
use crate::keyset::{AggregatedKey, SignerIndex, SignerPacket, SignerSet};
use crate::prf::{hash_challenge, mac_bytes, mac_verify, msg_digest, prf, DomainTag, Seed};

/// Global commitment plus the full per-signer commitment vector, published so
/// every signer can validate the aggregate without interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentBundle {
    pub commitment: GroupElement,
    /// (signer, R_j) in canonical set order.
    pub vector: Vec<(SignerIndex, GroupElement)>,
    pub ctr: u64,
    pub set_digest: [u8; 32],
    pub mac: [u8; 32],
}

impl CommitmentBundle {
    pub fn entry(&self, signer: SignerIndex) -> Option<&GroupElement> {
        self.vector
            .iter()
            .find(|(i, _)| *i == signer)
            .map(|(_, r)| r)
    }

    /// Bytes covered by the response MAC.
    pub fn core_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"bundle");
        out.extend_from_slice(&self.commitment.encode());
        out.extend_from_slice(&(self.vector.len() as u16).to_be_bytes());
        for (index, r) in &self.vector {
            out.extend_from_slice(&index.to_be_bytes());
            out.extend_from_slice(&r.encode());
        }
        out.extend_from_slice(&self.ctr.to_be_bytes());
        out.extend_from_slice(&self.set_digest);
        out
    }

    pub fn seal(&mut self, mac_key: &Seed) {
        self.mac = mac_bytes(mac_key, &self.core_bytes());
    }

    pub fn mac_valid(&self, mac_key: &Seed) -> bool {
        mac_verify(mac_key, &self.core_bytes(), &self.mac)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.core_bytes();
        out.drain(..b"bundle".len());
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn decode(backend: Backend, bytes: &[u8]) -> Result<Self, Error> {
        let ew = backend.params().element_width;
        let mut off = 0;
        let take = |off: &mut usize, len: usize| -> Result<&[u8], Error> {
            if bytes.len() < *off + len {
                return Err(Error::Decode("bundle truncated".into()));
            }
            let slice = &bytes[*off..*off + len];
            *off += len;
            Ok(slice)
        };
        let commitment = GroupElement::decode(backend, take(&mut off, ew)?)?;
        let count = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let mut vector = Vec::with_capacity(count);
        for _ in 0..count {
            let index = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized"));
            let r = GroupElement::decode(backend, take(&mut off, ew)?)?;
            vector.push((index, r));
        }
        let ctr = u64::from_be_bytes(take(&mut off, 8)?.try_into().expect("sized"));
        let set_digest: [u8; 32] = take(&mut off, 32)?.try_into().expect("sized");
        let mac: [u8; 32] = take(&mut off, 32)?.try_into().expect("sized");
        if off != bytes.len() {
            return Err(Error::Decode("bundle trailing bytes".into()));
        }
        Ok(CommitmentBundle {
            commitment,
            vector,
            ctr,
            set_digest,
            mac,
        })
    }
}

/// One signer's contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureShare {
    pub signer: SignerIndex,
    pub value: Scalar,
    pub ctr: u64,
}

impl SignatureShare {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.signer.to_be_bytes());
        out.extend_from_slice(&self.value.encode());
        out.extend_from_slice(&self.ctr.to_be_bytes());
        out
    }
}

/// The assembled signature.  The (R, c, s) core is constant size no matter
/// how many signers participated; the trailing records carry the signer list
/// and published coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiSignature {
    pub commitment: GroupElement,
    pub challenge: Scalar,
    pub response: Scalar,
    pub ctr: u64,
    /// Signer indices in canonical set order.
    pub signers: Vec<SignerIndex>,
    pub coefficients: BTreeMap<SignerIndex, Scalar>,
}

pub const SIG_MAGIC: &[u8; 4] = b"PSIG";

impl MultiSignature {
    /// The constant-size (R, c, s) portion.
    pub fn core_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.commitment.encode());
        out.extend_from_slice(&self.challenge.encode());
        out.extend_from_slice(&self.response.encode());
        out
    }

    /// Wire format: magic, R, c, s, ctr (8-byte BE), count (2-byte BE),
    /// then (index 2-byte BE, coefficient) records in signer order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SIG_MAGIC);
        out.extend_from_slice(&self.core_bytes());
        out.extend_from_slice(&self.ctr.to_be_bytes());
        out.extend_from_slice(&(self.signers.len() as u16).to_be_bytes());
        for index in &self.signers {
            out.extend_from_slice(&index.to_be_bytes());
            out.extend_from_slice(&self.coefficients[index].encode());
        }
        out
    }

    pub fn decode(backend: Backend, bytes: &[u8]) -> Result<Self, Error> {
        let params = backend.params();
        if bytes.len() < 4 || &bytes[..4] != SIG_MAGIC {
            return Err(Error::Decode("bad signature magic".into()));
        }
        let mut off = 4;
        let take = |off: &mut usize, len: usize| -> Result<&[u8], Error> {
            if bytes.len() < *off + len {
                return Err(Error::Decode("signature truncated".into()));
            }
            let slice = &bytes[*off..*off + len];
            *off += len;
            Ok(slice)
        };
        let commitment = GroupElement::decode(backend, take(&mut off, params.element_width)?)?;
        let challenge = Scalar::decode(backend, take(&mut off, params.scalar_width)?)?;
        let response = Scalar::decode(backend, take(&mut off, params.scalar_width)?)?;
        let ctr = u64::from_be_bytes(take(&mut off, 8)?.try_into().expect("sized"));
        let count = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let mut signers = Vec::with_capacity(count);
        let mut coefficients = BTreeMap::new();
        for _ in 0..count {
            let index = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized"));
            let coeff = Scalar::decode(backend, take(&mut off, params.scalar_width)?)?;
            if coefficients.insert(index, coeff).is_some() {
                return Err(Error::Decode(format!("duplicate signer record {index}")));
            }
            signers.push(index);
        }
        if off != bytes.len() {
            return Err(Error::Decode("signature trailing bytes".into()));
        }
        Ok(MultiSignature {
            commitment,
            challenge,
            response,
            ctr,
            signers,
            coefficients,
        })
    }
}

/// PRF input for nonce derivation: canonical message digest, 8-byte BE
/// counter, canonical set encoding.  Identical on signer and aggregator.
pub fn nonce_input(m_digest: &[u8; 32], ctr: u64, set_encoding: &[u8]) -> Vec<u8> {
    let mut data = Vec::with_capacity(32 + 8 + set_encoding.len());
    data.extend_from_slice(m_digest);
    data.extend_from_slice(&ctr.to_be_bytes());
    data.extend_from_slice(set_encoding);
    data
}

/// Deterministic nonce for one seed: w = PRF(seed, NONCE, input), R = g^w.
pub fn derive_nonce(
    backend: Backend,
    seed: &Seed,
    m_digest: &[u8; 32],
    ctr: u64,
    set_encoding: &[u8],
) -> (Scalar, GroupElement) {
    let w = prf(
        backend,
        seed,
        DomainTag::Nonce,
        &nonce_input(m_digest, ctr, set_encoding),
    );
    let r = GroupElement::base_exp(backend, &w);
    (w, r)
}

/// Signer-local nonce derivation.  Refuses to run unless the counter is
/// strictly above the stored value for this set (monotonicity rule) and the
/// signer is a member of the set; advances the stored counter on success.
pub fn local_nonce(
    packet: &mut SignerPacket,
    message: &[u8],
    ctr: u64,
    set: &SignerSet,
) -> Result<(Scalar, GroupElement), Error> {
    if !set.contains(packet.index) {
        return Err(Error::NotAMember(packet.index));
    }
    packet.advance_counter(set.digest(), ctr)?;
    Ok(derive_nonce(
        packet.backend(),
        packet.seed(),
        &msg_digest(message),
        ctr,
        &set.encoding(),
    ))
}

/// Signature share value: s_i = w_i + c * a_i * x_i mod q.
pub fn share_scalar(w: &Scalar, c: &Scalar, a: &Scalar, x: &Scalar) -> Scalar {
    w.add(&c.mul(a).mul(x))
}

/// Receiver-side bundle validation common to every signer: the vector must
/// cover exactly the signer set and multiply out to the published commitment.
pub fn check_bundle_consistency(bundle: &CommitmentBundle, set: &SignerSet) -> Result<(), Error> {
    if bundle.set_digest != set.digest() {
        return Err(Error::CommitmentVectorInvalid);
    }
    let vector_indices: BTreeSet<SignerIndex> = bundle.vector.iter().map(|(i, _)| *i).collect();
    let member_indices: BTreeSet<SignerIndex> = set.members().keys().copied().collect();
    if vector_indices != member_indices || bundle.vector.len() != set.len() {
        return Err(Error::CommitmentVectorInvalid);
    }
    let backend = bundle.commitment.backend();
    let prod = product(backend, bundle.vector.iter().map(|(_, r)| r));
    if prod != bundle.commitment {
        return Err(Error::CommitmentVectorInvalid);
    }
    Ok(())
}

/// Phase 2: non-interactive local signature generation.
///
/// Validates the aggregator MAC and the published commitment vector, derives
/// the local nonce under the counter rule, and checks the published entry for
/// this signer against the local derivation before releasing a share.
pub fn local_sign(
    packet: &mut SignerPacket,
    message: &[u8],
    bundle: &CommitmentBundle,
    agg: &AggregatedKey,
    set: &SignerSet,
) -> Result<SignatureShare, Error> {
    if !bundle.mac_valid(packet.mac_key()) {
        return Err(Error::AuthFailure("bundle MAC invalid".into()));
    }
    check_bundle_consistency(bundle, set)?;
    if agg.ordered_list_digest != set.digest() {
        return Err(Error::ShareSetInvalid(
            "aggregated key is for a different set".into(),
        ));
    }
    let (w, r_local) = local_nonce(packet, message, bundle.ctr, set)?;
    let published = bundle
        .entry(packet.index)
        .expect("membership checked by bundle consistency");
    if *published != r_local {
        return Err(Error::AggregatorTampering {
            signer: packet.index,
        });
    }
    let c = hash_challenge(
        &bundle.commitment,
        &agg.apk,
        message,
        &set.encoding(),
        bundle.ctr,
    );
    let a = agg.coefficients.get(&packet.index).ok_or_else(|| {
        Error::ShareSetInvalid(format!("no coefficient for signer {}", packet.index))
    })?;
    Ok(SignatureShare {
        signer: packet.index,
        value: share_scalar(&w, &c, a, packet.secret_key()),
        ctr: bundle.ctr,
    })
}

/// Fallback-mode variant: the nonce was generated fresh by the signer itself
/// (no aggregator seed involved), so there is no aggregator MAC to check.
/// All other consistency checks are identical.
pub fn local_sign_with_nonce(
    packet: &SignerPacket,
    message: &[u8],
    bundle: &CommitmentBundle,
    agg: &AggregatedKey,
    set: &SignerSet,
    nonce: &Scalar,
) -> Result<SignatureShare, Error> {
    check_bundle_consistency(bundle, set)?;
    let r_local = GroupElement::base_exp(packet.backend(), nonce);
    let published = bundle
        .entry(packet.index)
        .ok_or(Error::NotAMember(packet.index))?;
    if *published != r_local {
        return Err(Error::AggregatorTampering {
            signer: packet.index,
        });
    }
    let c = hash_challenge(
        &bundle.commitment,
        &agg.apk,
        message,
        &set.encoding(),
        bundle.ctr,
    );
    let a = agg.coefficients.get(&packet.index).ok_or_else(|| {
        Error::ShareSetInvalid(format!("no coefficient for signer {}", packet.index))
    })?;
    Ok(SignatureShare {
        signer: packet.index,
        value: share_scalar(nonce, &c, a, packet.secret_key()),
        ctr: bundle.ctr,
    })
}

/// Combine shares into the final signature.  Expects exactly one share per
/// set member with matching counters; the emitted challenge is recomputed
/// here rather than trusted from any share.
pub fn combine(
    shares: &[SignatureShare],
    bundle: &CommitmentBundle,
    agg: &AggregatedKey,
    set: &SignerSet,
    message: &[u8],
) -> Result<MultiSignature, Error> {
    if agg.ordered_list_digest != set.digest() || bundle.set_digest != set.digest() {
        return Err(Error::ShareSetInvalid("bundle/key set mismatch".into()));
    }
    let mut seen: BTreeSet<SignerIndex> = BTreeSet::new();
    for share in shares {
        if !set.contains(share.signer) {
            return Err(Error::ShareSetInvalid(format!(
                "share from non-member {}",
                share.signer
            )));
        }
        if !seen.insert(share.signer) {
            return Err(Error::ShareSetInvalid(format!(
                "duplicate share from {}",
                share.signer
            )));
        }
        if share.ctr != bundle.ctr {
            return Err(Error::CounterMismatch);
        }
    }
    if seen.len() != set.len() {
        return Err(Error::ShareSetInvalid(format!(
            "have {} shares, need {}",
            seen.len(),
            set.len()
        )));
    }
    let backend = bundle.commitment.backend();
    let mut s = Scalar::zero(backend);
    for share in shares {
        s = s.add(&share.value);
    }
    let c = hash_challenge(
        &bundle.commitment,
        &agg.apk,
        message,
        &set.encoding(),
        bundle.ctr,
    );
    Ok(MultiSignature {
        commitment: bundle.commitment.clone(),
        challenge: c,
        response: s,
        ctr: bundle.ctr,
        signers: set.ordered_indices(),
        coefficients: agg.coefficients.clone(),
    })
}

/// Why a signature was rejected.  Verification never errors; it rejects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    UnknownSigner(SignerIndex),
    MalformedSignature(String),
    CoefficientMismatch,
    ChallengeMismatch,
    EquationFailed,
    StaleCounter { presented: u64, last_seen: u64 },
    ThresholdUnmet { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Verifier-side replay state: last accepted counter per signer-set digest.
/// Callers needing concurrent verification serialize access per digest
/// (wrap in a mutex); the check-then-update here is a single borrow.
#[derive(Debug, Clone, Default)]
pub struct VerifierState {
    last_seen: BTreeMap<[u8; 32], u64>,
}

impl VerifierState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seen(&self, digest: &[u8; 32]) -> Option<u64> {
        self.last_seen.get(digest).copied()
    }

    /// Freshness rule from the verification listing: accept ctr >= last seen,
    /// then record it.
    pub fn observe(&mut self, digest: [u8; 32], ctr: u64) -> Result<(), RejectReason> {
        if let Some(&last) = self.last_seen.get(&digest) {
            if ctr < last {
                return Err(RejectReason::StaleCounter {
                    presented: ctr,
                    last_seen: last,
                });
            }
        }
        self.last_seen.insert(digest, ctr);
        Ok(())
    }
}

/// Multi-signature verification: recomputes apk from the public keys and the
/// published coefficients, re-derives the challenge, checks the signature
/// equation g^s = R * apk^c, and enforces counter freshness.
///
/// `trusted` optionally carries the aggregator-published aggregation; when
/// present the signature's coefficient records must match it exactly.
pub fn verify(
    message: &[u8],
    sig: &MultiSignature,
    pks: &BTreeMap<SignerIndex, GroupElement>,
    trusted: Option<&AggregatedKey>,
    state: &mut VerifierState,
) -> Verdict {
    let backend = sig.commitment.backend();

    let mut members = BTreeMap::new();
    for index in &sig.signers {
        let Some(pk) = pks.get(index) else {
            return Verdict::Reject(RejectReason::UnknownSigner(*index));
        };
        members.insert(*index, pk.clone());
    }
    if members.len() != sig.signers.len() || sig.signers.is_empty() {
        return Verdict::Reject(RejectReason::MalformedSignature("bad signer list".into()));
    }
    let set = match SignerSet::new(members) {
        Ok(set) => set,
        Err(e) => return Verdict::Reject(RejectReason::MalformedSignature(e.to_string())),
    };
    if sig.signers != set.ordered_indices() {
        return Verdict::Reject(RejectReason::MalformedSignature(
            "signer list not in canonical order".into(),
        ));
    }

    if let Some(trusted) = trusted {
        if trusted.coefficients != sig.coefficients || trusted.ordered_list_digest != set.digest() {
            return Verdict::Reject(RejectReason::CoefficientMismatch);
        }
    }

    // apk from public keys plus published coefficients
    let mut apk = GroupElement::identity(backend);
    for (index, pk) in set.members() {
        let Some(a) = sig.coefficients.get(index) else {
            return Verdict::Reject(RejectReason::MalformedSignature(format!(
                "missing coefficient for {index}"
            )));
        };
        apk = apk.mul(&pk.exp(a));
    }

    let expected_c = hash_challenge(&sig.commitment, &apk, message, &set.encoding(), sig.ctr);
    if expected_c != sig.challenge {
        return Verdict::Reject(RejectReason::ChallengeMismatch);
    }

    let lhs = GroupElement::base_exp(backend, &sig.response);
    let rhs = sig.commitment.mul(&apk.exp(&sig.challenge));
    if lhs != rhs {
        return Verdict::Reject(RejectReason::EquationFailed);
    }

    match state.observe(set.digest(), sig.ctr) {
        Ok(()) => Verdict::Accept,
        Err(reason) => Verdict::Reject(reason),
    }
}

/// Share verification: g^{s_i} = R_i * pk_i^{a_i * c}.
pub fn verify_share(
    share: &SignatureShare,
    r_i: &GroupElement,
    pk_i: &GroupElement,
    a_i: &Scalar,
    c: &Scalar,
) -> bool {
    let backend = pk_i.backend();
    let lhs = GroupElement::base_exp(backend, &share.value);
    let rhs = r_i.mul(&pk_i.exp(&a_i.mul(c)));
    lhs == rhs
}
