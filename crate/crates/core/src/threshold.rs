//! Distributed threshold setup and (t, n)-threshold signing.
//!
//! Setup is a dual-polynomial Feldman sharing: each dealer commits to both
//! polynomials, parties verify their shares against the commitment rows, any
//! complaint restarts the whole protocol.  Signing weights per-member nonce
//! commitments by Lagrange coefficients at zero; reconstruction filters
//! invalid shares and interpolates the key part from any t+1 valid ones.
//!
//! Sharing polynomials have degree t (t+1 coefficients), so t+1 shares are
//! necessary and sufficient for reconstruction and up to t misbehaving
//! parties can be tolerated.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::error::Error;
use crate::group::{product, Backend, GroupElement, Scalar};
use crate::keyset::{set_digest, SignerIndex};
use crate::multisig::{
    nonce_input, share_scalar, CommitmentBundle, MultiSignature, RejectReason, SignatureShare,
    Verdict, VerifierState,
};
use crate::prf::{derive_seed, hash_challenge, msg_digest, prf, seed_refresh, DomainTag, Seed};

/// Sharing polynomial over Z_q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coeffs: Vec<Scalar>,
}

impl Polynomial {
    /// Random polynomial of the given degree (degree+1 coefficients).
    pub fn random(backend: Backend, degree: u16, rng: &mut dyn RngCore) -> Self {
        let coeffs = (0..=degree).map(|_| Scalar::random(backend, rng)).collect();
        Polynomial { coeffs }
    }

    pub fn from_coefficients(coeffs: Vec<Scalar>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least a constant");
        Polynomial { coeffs }
    }

    pub fn degree(&self) -> u16 {
        (self.coeffs.len() - 1) as u16
    }

    pub fn constant(&self) -> &Scalar {
        &self.coeffs[0]
    }

    /// Horner evaluation at x.
    pub fn evaluate(&self, x: &Scalar) -> Scalar {
        let backend = self.coeffs[0].backend();
        let mut acc = Scalar::zero(backend);
        for coeff in self.coeffs.iter().rev() {
            acc = acc.mul(x).add(coeff);
        }
        acc
    }

    /// Feldman commitment row: g^{coeff_j} for each coefficient.
    pub fn commitments(&self) -> Vec<GroupElement> {
        let backend = self.coeffs[0].backend();
        self.coeffs
            .iter()
            .map(|c| GroupElement::base_exp(backend, c))
            .collect()
    }
}

/// Evaluate a commitment row in the exponent: prod of rows_j ^ (k^j).
pub fn commitment_eval(rows: &[GroupElement], k: SignerIndex) -> GroupElement {
    let backend = rows[0].backend();
    let x = Scalar::from_u64(backend, k as u64);
    let mut power = Scalar::one(backend);
    let mut acc = GroupElement::identity(backend);
    for row in rows {
        acc = acc.mul(&row.exp(&power));
        power = power.mul(&x);
    }
    acc
}

/// One dealer's contribution: both commitment rows and the per-recipient
/// secret share pairs.
#[derive(Debug, Clone)]
pub struct DealerOutput {
    pub dealer: SignerIndex,
    pub phi_commitments: Vec<GroupElement>,
    pub psi_commitments: Vec<GroupElement>,
    /// recipient -> (s_{i,k}, r_{i,k})
    pub shares: BTreeMap<SignerIndex, (Scalar, Scalar)>,
}

/// Complaint record broadcast when a share fails verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Complaint {
    pub accuser: SignerIndex,
    pub dealer: SignerIndex,
}

/// Deal from explicit polynomials; the deterministic path used for replay
/// and fixture tests.
pub fn deal_from_polynomials(
    dealer: SignerIndex,
    n: u16,
    phi: &Polynomial,
    psi: &Polynomial,
) -> DealerOutput {
    let backend = phi.constant().backend();
    let mut shares = BTreeMap::new();
    for k in 1..=n {
        let at = Scalar::from_u64(backend, k as u64);
        shares.insert(k, (phi.evaluate(&at), psi.evaluate(&at)));
    }
    let output = DealerOutput {
        dealer,
        phi_commitments: phi.commitments(),
        psi_commitments: psi.commitments(),
        shares,
    };
    // Self-check before broadcast: every share must match the rows.
    for (k, (s, _)) in &output.shares {
        debug_assert_eq!(
            GroupElement::base_exp(backend, s),
            commitment_eval(&output.phi_commitments, *k)
        );
    }
    output
}

/// Phase 1 dealing: two random degree-t polynomials, commitment rows of
/// length t+1, and shares at evaluation points 1..=n.
pub fn dkg_deal(
    dealer: SignerIndex,
    t: u16,
    n: u16,
    backend: Backend,
    rng: &mut dyn RngCore,
) -> Result<DealerOutput, Error> {
    if t >= n || n == 0 {
        return Err(Error::InvalidParams(format!("need t < n, got t={t} n={n}")));
    }
    let phi = Polynomial::random(backend, t, rng);
    let psi = Polynomial::random(backend, t, rng);
    Ok(deal_from_polynomials(dealer, n, &phi, &psi))
}

/// Phase 2 share verification: both the phi-check and the psi-check.
/// Returns the verdict and, on failure, the complaint to broadcast.
pub fn dkg_verify_share(
    recipient: SignerIndex,
    share: &(Scalar, Scalar),
    phi_rows: &[GroupElement],
    psi_rows: &[GroupElement],
) -> (bool, Option<Complaint>) {
    let backend = phi_rows[0].backend();
    let phi_ok = GroupElement::base_exp(backend, &share.0) == commitment_eval(phi_rows, recipient);
    let psi_ok = GroupElement::base_exp(backend, &share.1) == commitment_eval(psi_rows, recipient);
    if phi_ok && psi_ok {
        (true, None)
    } else {
        (
            false,
            Some(Complaint {
                accuser: recipient,
                dealer: 0,
            }),
        )
    }
}

/// A party's combined threshold state after setup: secret share, nonce-share
/// remnant, signing seed, MAC key for the aggregator channel, verification
/// key, and the TPM-side monotonic counter store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdShare {
    pub index: SignerIndex,
    secret_share: Scalar,
    nonce_share: Scalar,
    seed: Seed,
    mac_key: Seed,
    verification_key: GroupElement,
    pub epoch: u64,
    counters: BTreeMap<[u8; 32], u64>,
}

impl ThresholdShare {
    pub fn backend(&self) -> Backend {
        self.secret_share.backend()
    }

    pub fn secret_share(&self) -> &Scalar {
        &self.secret_share
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn mac_key(&self) -> &Seed {
        &self.mac_key
    }

    pub fn verification_key(&self) -> &GroupElement {
        &self.verification_key
    }

    pub fn stored_counter(&self, digest: &[u8; 32]) -> Option<u64> {
        self.counters.get(digest).copied()
    }

    pub fn advance_counter(&mut self, digest: [u8; 32], ctr: u64) -> Result<(), Error> {
        if let Some(&stored) = self.counters.get(&digest) {
            if ctr <= stored {
                return Err(Error::CounterReplay {
                    presented: ctr,
                    stored,
                });
            }
        }
        self.counters.insert(digest, ctr);
        Ok(())
    }

    pub fn apply_refresh(&mut self, epoch: u64, refresh_token: &[u8]) {
        self.seed = seed_refresh(&self.seed, epoch, refresh_token);
        self.epoch = epoch;
    }

    /// Plaintext fixture format, hex fields one per line.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group = {:02x}\n", self.backend().tag()));
        out.push_str(&format!(
            "index = {}\n",
            hex::encode(self.index.to_be_bytes())
        ));
        out.push_str(&format!(
            "x = {}\n",
            hex::encode(self.secret_share.encode())
        ));
        out.push_str(&format!("w = {}\n", hex::encode(self.nonce_share.encode())));
        out.push_str(&format!("seed = {}\n", hex::encode(self.seed.as_bytes())));
        out.push_str(&format!(
            "mac_key = {}\n",
            hex::encode(self.mac_key.as_bytes())
        ));
        out.push_str(&format!(
            "vk = {}\n",
            hex::encode(self.verification_key.encode())
        ));
        out.push_str(&format!(
            "epoch = {}\n",
            hex::encode(self.epoch.to_be_bytes())
        ));
        for (digest, ctr) in &self.counters {
            out.push_str(&format!(
                "ctr.{} = {}\n",
                hex::encode(digest),
                hex::encode(ctr.to_be_bytes())
            ));
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self, Error> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        let mut counters = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Decode(format!("bad share line: {line}")))?;
            let (name, value) = (name.trim().to_string(), value.trim().to_string());
            if let Some(digest_hex) = name.strip_prefix("ctr.") {
                let digest: [u8; 32] = hex::decode(digest_hex)
                    .map_err(|e| Error::Decode(e.to_string()))?
                    .try_into()
                    .map_err(|_| Error::Decode("counter digest must be 32 bytes".into()))?;
                let ctr_bytes: [u8; 8] = hex::decode(&value)
                    .map_err(|e| Error::Decode(e.to_string()))?
                    .try_into()
                    .map_err(|_| Error::Decode("counter must be 8 bytes".into()))?;
                counters.insert(digest, u64::from_be_bytes(ctr_bytes));
            } else {
                fields.insert(name, value);
            }
        }
        let get = |name: &str| -> Result<Vec<u8>, Error> {
            let value = fields
                .get(name)
                .ok_or_else(|| Error::Decode(format!("share missing field {name}")))?;
            hex::decode(value).map_err(|e| Error::Decode(e.to_string()))
        };
        let group_bytes = get("group")?;
        if group_bytes.len() != 1 {
            return Err(Error::Decode("group tag must be one byte".into()));
        }
        let backend = Backend::from_tag(group_bytes[0])?;
        let index_bytes: [u8; 2] = get("index")?
            .try_into()
            .map_err(|_| Error::Decode("index must be 2 bytes".into()))?;
        let epoch_bytes: [u8; 8] = get("epoch")?
            .try_into()
            .map_err(|_| Error::Decode("epoch must be 8 bytes".into()))?;
        Ok(ThresholdShare {
            index: u16::from_be_bytes(index_bytes),
            secret_share: Scalar::decode(backend, &get("x")?)?,
            nonce_share: Scalar::decode(backend, &get("w")?)?,
            seed: Seed::from_slice(&get("seed")?)?,
            mac_key: Seed::from_slice(&get("mac_key")?)?,
            verification_key: GroupElement::decode(backend, &get("vk")?)?,
            epoch: u64::from_be_bytes(epoch_bytes),
            counters,
        })
    }
}

/// Public threshold parameters: master public key, threshold, and the
/// per-party verification keys derived from the Feldman rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdParams {
    pub group: Backend,
    pub mpk: GroupElement,
    pub t: u16,
    pub n: u16,
    pub verification_keys: BTreeMap<SignerIndex, GroupElement>,
    pub aggregator_id: Vec<u8>,
}

pub const THRESHOLD_PARAMS_MAGIC: &[u8; 4] = b"PTHR";

impl ThresholdParams {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(THRESHOLD_PARAMS_MAGIC);
        out.push(self.group.tag());
        out.extend_from_slice(&self.t.to_be_bytes());
        out.extend_from_slice(&self.n.to_be_bytes());
        out.extend_from_slice(&self.mpk.encode());
        out.extend_from_slice(&(self.verification_keys.len() as u16).to_be_bytes());
        for (index, vk) in &self.verification_keys {
            out.extend_from_slice(&index.to_be_bytes());
            out.extend_from_slice(&vk.encode());
        }
        out.extend_from_slice(&(self.aggregator_id.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.aggregator_id);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() < 9 || &bytes[..4] != THRESHOLD_PARAMS_MAGIC {
            return Err(Error::Decode("bad threshold params header".into()));
        }
        let group = Backend::from_tag(bytes[4])?;
        let ew = group.params().element_width;
        let t = u16::from_be_bytes([bytes[5], bytes[6]]);
        let n = u16::from_be_bytes([bytes[7], bytes[8]]);
        let mut off = 9;
        let take = |off: &mut usize, len: usize| -> Result<&[u8], Error> {
            if bytes.len() < *off + len {
                return Err(Error::Decode("threshold params truncated".into()));
            }
            let slice = &bytes[*off..*off + len];
            *off += len;
            Ok(slice)
        };
        let mpk = GroupElement::decode(group, take(&mut off, ew)?)?;
        let count = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let mut verification_keys = BTreeMap::new();
        for _ in 0..count {
            let index = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized"));
            verification_keys.insert(index, GroupElement::decode(group, take(&mut off, ew)?)?);
        }
        let id_len = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let aggregator_id = take(&mut off, id_len)?.to_vec();
        if off != bytes.len() {
            return Err(Error::Decode("threshold params trailing bytes".into()));
        }
        Ok(ThresholdParams {
            group,
            mpk,
            t,
            n,
            verification_keys,
            aggregator_id,
        })
    }
}

/// Canonical encoding of a threshold signer set: sorted indices, 2-byte BE.
pub fn index_set_encoding(indices: &BTreeSet<SignerIndex>) -> Vec<u8> {
    let mut out = Vec::with_capacity(indices.len() * 2);
    for index in indices {
        out.extend_from_slice(&index.to_be_bytes());
    }
    out
}

pub fn index_set_digest(indices: &BTreeSet<SignerIndex>) -> [u8; 32] {
    set_digest(&index_set_encoding(indices))
}

/// Lagrange coefficient at zero for member i of set T:
/// L_i(0) = prod_{k in T, k != i} (-k) / (i - k).
pub fn lagrange_at_zero(
    backend: Backend,
    indices: &BTreeSet<SignerIndex>,
    i: SignerIndex,
) -> Result<Scalar, Error> {
    if indices.contains(&0) {
        return Err(Error::InvalidIndex("evaluation point 0 is reserved".into()));
    }
    if !indices.contains(&i) {
        return Err(Error::NotAMember(i));
    }
    let mut numerator = Scalar::one(backend);
    let mut denominator = Scalar::one(backend);
    let i_scalar = Scalar::from_u64(backend, i as u64);
    for &k in indices {
        if k == i {
            continue;
        }
        let k_scalar = Scalar::from_u64(backend, k as u64);
        numerator = numerator.mul(&k_scalar.negate());
        denominator = denominator.mul(&i_scalar.sub(&k_scalar));
    }
    Ok(numerator.mul(&denominator.invert()?))
}

/// Per-party MAC key for the aggregator channel, derived from the signing
/// seed both sides already hold.
pub fn threshold_mac_key(seed: &Seed) -> Seed {
    derive_seed(seed.as_bytes(), DomainTag::SeedDerive, b"mac-key")
}

/// Everything the distributed setup produces: public parameters, the
/// per-party combined states, and the seed store handed to the aggregator.
pub type DkgOutcome = (
    ThresholdParams,
    Vec<ThresholdShare>,
    BTreeMap<SignerIndex, Seed>,
);

/// Phases 2-3: verify every share, combine, build verification keys and the
/// master public key, and hand the seed store to the aggregator.
///
/// Any complaint (supplied or discovered here) aborts the whole protocol.
pub fn dkg_finalize(
    deals: &[DealerOutput],
    complaints: &[Complaint],
    t: u16,
    n: u16,
) -> Result<DkgOutcome, Error> {
    if deals.is_empty() {
        return Err(Error::InvalidParams("no dealer outputs".into()));
    }
    if !complaints.is_empty() {
        return Err(Error::DkgRestartRequired);
    }
    let backend = deals[0].phi_commitments[0].backend();
    for deal in deals {
        if deal.phi_commitments.len() != (t + 1) as usize
            || deal.psi_commitments.len() != (t + 1) as usize
        {
            return Err(Error::InvalidParams(format!(
                "dealer {} commitment rows must have t+1 entries",
                deal.dealer
            )));
        }
        for k in 1..=n {
            let share = deal.shares.get(&k).ok_or_else(|| {
                Error::InvalidParams(format!("dealer {} missing share for {k}", deal.dealer))
            })?;
            let (ok, _) = dkg_verify_share(k, share, &deal.phi_commitments, &deal.psi_commitments);
            if !ok {
                return Err(Error::DkgRestartRequired);
            }
        }
    }

    let mpk = product(backend, deals.iter().map(|d| &d.phi_commitments[0]));
    let mut shares = Vec::with_capacity(n as usize);
    let mut verification_keys = BTreeMap::new();
    let mut seed_store = BTreeMap::new();
    for k in 1..=n {
        let mut x_k = Scalar::zero(backend);
        let mut w_k = Scalar::zero(backend);
        let mut vk = GroupElement::identity(backend);
        for deal in deals {
            let (s, r) = &deal.shares[&k];
            x_k = x_k.add(s);
            w_k = w_k.add(r);
            vk = vk.mul(&commitment_eval(&deal.phi_commitments, k));
        }
        if GroupElement::base_exp(backend, &x_k) != vk {
            return Err(Error::DkgRestartRequired);
        }
        let seed = derive_seed(&w_k.encode(), DomainTag::SigningSeed, b"signing");
        let mac_key = threshold_mac_key(&seed);
        seed_store.insert(k, seed.clone());
        verification_keys.insert(k, vk.clone());
        shares.push(ThresholdShare {
            index: k,
            secret_share: x_k,
            nonce_share: w_k,
            seed,
            mac_key,
            verification_key: vk,
            epoch: 0,
            counters: BTreeMap::new(),
        });
    }
    let params = ThresholdParams {
        group: backend,
        mpk,
        t,
        n,
        verification_keys,
        aggregator_id: b"pitpm-aggregator".to_vec(),
    };
    Ok((params, shares, seed_store))
}

/// Honest end-to-end DKG with n dealers.  Convenience for the CLI and tests.
pub fn run_dkg(
    t: u16,
    n: u16,
    backend: Backend,
    rng: &mut dyn RngCore,
) -> Result<DkgOutcome, Error> {
    let mut deals = Vec::with_capacity(n as usize);
    for dealer in 1..=n {
        deals.push(dkg_deal(dealer, t, n, backend, rng)?);
    }
    let mut complaints = Vec::new();
    for deal in &deals {
        for k in 1..=n {
            let (ok, complaint) = dkg_verify_share(
                k,
                &deal.shares[&k],
                &deal.phi_commitments,
                &deal.psi_commitments,
            );
            if !ok {
                let mut complaint = complaint.expect("complaint accompanies failure");
                complaint.dealer = deal.dealer;
                complaints.push(complaint);
            }
        }
    }
    dkg_finalize(&deals, &complaints, t, n)
}

/// Aggregator-side weighted commitment assembly from explicit nonces.
pub fn assemble_weighted_bundle(
    backend: Backend,
    nonces: &BTreeMap<SignerIndex, Scalar>,
    ctr: u64,
    digest: [u8; 32],
) -> Result<CommitmentBundle, Error> {
    let indices: BTreeSet<SignerIndex> = nonces.keys().copied().collect();
    let mut vector = Vec::with_capacity(nonces.len());
    let mut commitment = GroupElement::identity(backend);
    for (&index, w) in nonces {
        let r = GroupElement::base_exp(backend, w);
        let weight = lagrange_at_zero(backend, &indices, index)?;
        commitment = commitment.mul(&r.exp(&weight));
        vector.push((index, r));
    }
    Ok(CommitmentBundle {
        commitment,
        vector,
        ctr,
        set_digest: digest,
        mac: [0; 32],
    })
}

/// Phase 1: derive every member's nonce from the stored seeds and assemble
/// the Lagrange-weighted global commitment with the full vector attached.
/// Also returns the nonce scalars for the combiner's use; they never leave
/// the aggregator.
pub fn threshold_commitment(
    backend: Backend,
    seed_store: &BTreeMap<SignerIndex, Seed>,
    t: u16,
    indices: &BTreeSet<SignerIndex>,
    message: &[u8],
    ctr: u64,
) -> Result<(CommitmentBundle, BTreeMap<SignerIndex, Scalar>), Error> {
    threshold_commitment_digested(backend, seed_store, t, indices, &msg_digest(message), ctr)
}

/// As [`threshold_commitment`], from the canonical message digest the
/// requests carry.
pub fn threshold_commitment_digested(
    backend: Backend,
    seed_store: &BTreeMap<SignerIndex, Seed>,
    t: u16,
    indices: &BTreeSet<SignerIndex>,
    m_digest: &[u8; 32],
    ctr: u64,
) -> Result<(CommitmentBundle, BTreeMap<SignerIndex, Scalar>), Error> {
    if indices.len() < (t + 1) as usize {
        return Err(Error::ThresholdUnmet {
            have: indices.len(),
            need: (t + 1) as usize,
        });
    }
    if indices.contains(&0) {
        return Err(Error::InvalidIndex("party index 0 is reserved".into()));
    }
    let encoding = index_set_encoding(indices);
    let mut nonces = BTreeMap::new();
    for &index in indices {
        let seed = seed_store.get(&index).ok_or(Error::UnknownSigner(index))?;
        let input = nonce_input(m_digest, ctr, &encoding);
        nonces.insert(index, prf(backend, seed, DomainTag::Nonce, &input));
    }
    let bundle = assemble_weighted_bundle(backend, &nonces, ctr, index_set_digest(indices))?;
    Ok((bundle, nonces))
}

/// Receiver-side bundle validation: the vector must cover exactly T and the
/// published commitment must equal the Lagrange-weighted product.
pub fn check_threshold_bundle(
    bundle: &CommitmentBundle,
    indices: &BTreeSet<SignerIndex>,
    t: u16,
) -> Result<(), Error> {
    if indices.len() < (t + 1) as usize {
        return Err(Error::ThresholdUnmet {
            have: indices.len(),
            need: (t + 1) as usize,
        });
    }
    if bundle.set_digest != index_set_digest(indices) {
        return Err(Error::CommitmentVectorInvalid);
    }
    let vector_indices: BTreeSet<SignerIndex> = bundle.vector.iter().map(|(i, _)| *i).collect();
    if vector_indices != *indices || bundle.vector.len() != indices.len() {
        return Err(Error::CommitmentVectorInvalid);
    }
    let backend = bundle.commitment.backend();
    let mut weighted = GroupElement::identity(backend);
    for (index, r) in &bundle.vector {
        let weight = lagrange_at_zero(backend, indices, *index)?;
        weighted = weighted.mul(&r.exp(&weight));
    }
    if weighted != bundle.commitment {
        return Err(Error::CommitmentVectorInvalid);
    }
    Ok(())
}

/// Phase 2: local threshold signature share s_i = w_i + c * x_i.
pub fn threshold_local_sign(
    share_state: &mut ThresholdShare,
    message: &[u8],
    bundle: &CommitmentBundle,
    params: &ThresholdParams,
    indices: &BTreeSet<SignerIndex>,
) -> Result<SignatureShare, Error> {
    if !bundle.mac_valid(&share_state.mac_key) {
        return Err(Error::AuthFailure("bundle MAC invalid".into()));
    }
    check_threshold_bundle(bundle, indices, params.t)?;
    if !indices.contains(&share_state.index) {
        return Err(Error::NotAMember(share_state.index));
    }
    share_state.advance_counter(bundle.set_digest, bundle.ctr)?;
    let backend = share_state.backend();
    let encoding = index_set_encoding(indices);
    let input = nonce_input(&msg_digest(message), bundle.ctr, &encoding);
    let w = prf(backend, &share_state.seed, DomainTag::Nonce, &input);
    let r_local = GroupElement::base_exp(backend, &w);
    let published = bundle
        .entry(share_state.index)
        .expect("membership checked by bundle consistency");
    if *published != r_local {
        return Err(Error::AggregatorTampering {
            signer: share_state.index,
        });
    }
    let c = hash_challenge(
        &bundle.commitment,
        &params.mpk,
        message,
        &encoding,
        bundle.ctr,
    );
    Ok(SignatureShare {
        signer: share_state.index,
        value: share_scalar(&w, &c, &Scalar::one(backend), &share_state.secret_share),
        ctr: bundle.ctr,
    })
}

/// Fallback-mode variant of [`threshold_local_sign`]: the nonce was
/// generated fresh by the signer itself, so there is no aggregator MAC and
/// no seed derivation; every consistency check still runs.
pub fn threshold_local_sign_with_nonce(
    share_state: &ThresholdShare,
    message: &[u8],
    bundle: &CommitmentBundle,
    params: &ThresholdParams,
    indices: &BTreeSet<SignerIndex>,
    nonce: &Scalar,
) -> Result<SignatureShare, Error> {
    check_threshold_bundle(bundle, indices, params.t)?;
    if !indices.contains(&share_state.index) {
        return Err(Error::NotAMember(share_state.index));
    }
    let backend = share_state.backend();
    let r_local = GroupElement::base_exp(backend, nonce);
    let published = bundle
        .entry(share_state.index)
        .expect("membership checked by bundle consistency");
    if *published != r_local {
        return Err(Error::AggregatorTampering {
            signer: share_state.index,
        });
    }
    let encoding = index_set_encoding(indices);
    let c = hash_challenge(
        &bundle.commitment,
        &params.mpk,
        message,
        &encoding,
        bundle.ctr,
    );
    Ok(SignatureShare {
        signer: share_state.index,
        value: share_scalar(nonce, &c, &Scalar::one(backend), &share_state.secret_share),
        ctr: bundle.ctr,
    })
}

/// Share verification against the Feldman-derived verification key:
/// g^{s_i} = R_i * vk_i^c.
pub fn verify_threshold_share(
    share: &SignatureShare,
    r_i: &GroupElement,
    vk_i: &GroupElement,
    c: &Scalar,
) -> bool {
    let backend = vk_i.backend();
    GroupElement::base_exp(backend, &share.value) == r_i.mul(&vk_i.exp(c))
}

/// Phase 3 reconstruction with robustness filtering.
///
/// Invalid shares are discarded first; at least t+1 verified shares must
/// remain.  The key part of the signature is interpolated from the
/// lexicographically smallest t+1 valid shares.  When shares are missing or
/// were discarded, the combiner (the aggregator, which derived every nonce
/// from its seed store) fills in the nonce part from `session_nonces` so the
/// emitted signature stays bound to the challenge the signers answered.
/// Without nonce access, reconstruction requires every member's share.
pub fn reconstruct(
    shares: &[SignatureShare],
    bundle: &CommitmentBundle,
    params: &ThresholdParams,
    indices: &BTreeSet<SignerIndex>,
    message: &[u8],
    session_nonces: Option<&BTreeMap<SignerIndex, Scalar>>,
) -> Result<MultiSignature, Error> {
    check_threshold_bundle(bundle, indices, params.t)?;
    let backend = params.group;
    let need = (params.t + 1) as usize;
    let encoding = index_set_encoding(indices);
    let c = hash_challenge(
        &bundle.commitment,
        &params.mpk,
        message,
        &encoding,
        bundle.ctr,
    );

    let mut valid: BTreeMap<SignerIndex, Scalar> = BTreeMap::new();
    for share in shares {
        if share.ctr != bundle.ctr || !indices.contains(&share.signer) {
            continue;
        }
        if valid.contains_key(&share.signer) {
            continue;
        }
        let (Some(r_i), Some(vk_i)) = (
            bundle.entry(share.signer),
            params.verification_keys.get(&share.signer),
        ) else {
            continue;
        };
        if verify_threshold_share(share, r_i, vk_i, &c) {
            valid.insert(share.signer, share.value.clone());
        }
    }
    if valid.len() < need {
        return Err(Error::InsufficientShares {
            have: valid.len(),
            need,
        });
    }

    let s = if valid.len() == indices.len() {
        // Every member contributed a valid share: weighted sum over the full
        // set, which interpolates both the nonce and key polynomials at zero.
        let mut sum = Scalar::zero(backend);
        for (&index, value) in &valid {
            sum = sum.add(&value.mul(&lagrange_at_zero(backend, indices, index)?));
        }
        sum
    } else {
        let Some(nonces) = session_nonces else {
            return Err(Error::InsufficientShares {
                have: valid.len(),
                need: indices.len(),
            });
        };
        // Shares are missing or were discarded.  Interpolate the key part
        // c*x from the lexicographically smallest t+1 valid shares, then
        // attach the full set's weighted nonce sum, which is exactly log_g
        // of the published commitment the challenge was bound to.
        let selected: BTreeSet<SignerIndex> = valid.keys().copied().take(need).collect();
        let mut key_part = Scalar::zero(backend);
        for &index in &selected {
            let w = nonces.get(&index).ok_or(Error::UnknownSigner(index))?;
            let stripped = valid[&index].sub(w);
            key_part = key_part.add(&stripped.mul(&lagrange_at_zero(backend, &selected, index)?));
        }
        let mut nonce_part = Scalar::zero(backend);
        for &index in indices {
            let w = nonces.get(&index).ok_or(Error::UnknownSigner(index))?;
            nonce_part = nonce_part.add(&w.mul(&lagrange_at_zero(backend, indices, index)?));
        }
        key_part.add(&nonce_part)
    };

    let mut coefficients = BTreeMap::new();
    for &index in indices {
        coefficients.insert(index, lagrange_at_zero(backend, indices, index)?);
    }
    Ok(MultiSignature {
        commitment: bundle.commitment.clone(),
        challenge: c,
        response: s,
        ctr: bundle.ctr,
        signers: indices.iter().copied().collect(),
        coefficients,
    })
}

/// Threshold verification: threshold size, counter freshness, challenge
/// recomputation, signature equation against the master public key, and a
/// cross-check of the published Lagrange records.
pub fn verify_threshold(
    message: &[u8],
    sig: &MultiSignature,
    params: &ThresholdParams,
    state: &mut VerifierState,
) -> Verdict {
    let backend = params.group;
    let indices: BTreeSet<SignerIndex> = sig.signers.iter().copied().collect();
    if indices.len() != sig.signers.len() || sig.signers.windows(2).any(|w| w[0] >= w[1]) {
        return Verdict::Reject(RejectReason::MalformedSignature(
            "signer list not strictly increasing".into(),
        ));
    }
    if indices.len() < (params.t + 1) as usize {
        return Verdict::Reject(RejectReason::ThresholdUnmet {
            have: indices.len(),
            need: (params.t + 1) as usize,
        });
    }
    for &index in &indices {
        if index == 0 || index > params.n {
            return Verdict::Reject(RejectReason::UnknownSigner(index));
        }
    }
    for &index in &indices {
        match lagrange_at_zero(backend, &indices, index) {
            Ok(weight) => {
                if sig.coefficients.get(&index) != Some(&weight) {
                    return Verdict::Reject(RejectReason::CoefficientMismatch);
                }
            }
            Err(_) => return Verdict::Reject(RejectReason::CoefficientMismatch),
        }
    }
    let digest = index_set_digest(&indices);
    if let Some(last) = state.last_seen(&digest) {
        if sig.ctr < last {
            return Verdict::Reject(RejectReason::StaleCounter {
                presented: sig.ctr,
                last_seen: last,
            });
        }
    }
    let encoding = index_set_encoding(&indices);
    let expected_c = hash_challenge(&sig.commitment, &params.mpk, message, &encoding, sig.ctr);
    if expected_c != sig.challenge {
        return Verdict::Reject(RejectReason::ChallengeMismatch);
    }
    let lhs = GroupElement::base_exp(backend, &sig.response);
    let rhs = sig.commitment.mul(&params.mpk.exp(&sig.challenge));
    if lhs != rhs {
        return Verdict::Reject(RejectReason::EquationFailed);
    }
    state_update(state, digest, sig.ctr);
    Verdict::Accept
}

fn state_update(state: &mut VerifierState, digest: [u8; 32], ctr: u64) {
    // VerifierState enforces >= internally; the pre-check above already
    // rejected stale counters.
    let _ = state.observe(digest, ctr);
}

/// DKG transcript records for the replay file format.
#[derive(Debug, Clone, PartialEq)]
pub enum DkgRecord {
    /// Broadcast of both commitment rows.
    Commitments {
        dealer: SignerIndex,
        phi: Vec<GroupElement>,
        psi: Vec<GroupElement>,
    },
    /// Point-to-point share delivery.
    Share {
        dealer: SignerIndex,
        recipient: SignerIndex,
        phi_share: Scalar,
        psi_share: Scalar,
    },
    Complaint {
        accuser: SignerIndex,
        dealer: SignerIndex,
    },
}

const DKG_REC_COMMITMENTS: u8 = 0x01;
const DKG_REC_SHARE: u8 = 0x02;
const DKG_REC_COMPLAINT: u8 = 0x03;

/// Framed records: type byte, dealer index, recipient index (0 = broadcast),
/// 4-byte BE payload length, payload.
pub fn encode_dkg_transcript(records: &[DkgRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in records {
        let (ty, dealer, recipient, payload) = match record {
            DkgRecord::Commitments { dealer, phi, psi } => {
                let mut payload = Vec::new();
                payload.extend_from_slice(&(phi.len() as u16).to_be_bytes());
                for row in phi.iter().chain(psi) {
                    payload.extend_from_slice(&row.encode());
                }
                (DKG_REC_COMMITMENTS, *dealer, 0u16, payload)
            }
            DkgRecord::Share {
                dealer,
                recipient,
                phi_share,
                psi_share,
            } => {
                let mut payload = phi_share.encode();
                payload.extend_from_slice(&psi_share.encode());
                (DKG_REC_SHARE, *dealer, *recipient, payload)
            }
            DkgRecord::Complaint { accuser, dealer } => {
                (DKG_REC_COMPLAINT, *dealer, *accuser, Vec::new())
            }
        };
        out.push(ty);
        out.extend_from_slice(&dealer.to_be_bytes());
        out.extend_from_slice(&recipient.to_be_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
    }
    out
}

pub fn decode_dkg_transcript(backend: Backend, bytes: &[u8]) -> Result<Vec<DkgRecord>, Error> {
    let params = backend.params();
    let mut records = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        if bytes.len() < off + 9 {
            return Err(Error::Decode("dkg record header truncated".into()));
        }
        let ty = bytes[off];
        let dealer = u16::from_be_bytes([bytes[off + 1], bytes[off + 2]]);
        let recipient = u16::from_be_bytes([bytes[off + 3], bytes[off + 4]]);
        let len = u32::from_be_bytes(bytes[off + 5..off + 9].try_into().expect("sized")) as usize;
        off += 9;
        if bytes.len() < off + len {
            return Err(Error::Decode("dkg record payload truncated".into()));
        }
        let payload = &bytes[off..off + len];
        off += len;
        match ty {
            DKG_REC_COMMITMENTS => {
                if payload.len() < 2 {
                    return Err(Error::Decode("commitment record too short".into()));
                }
                let rows = u16::from_be_bytes([payload[0], payload[1]]) as usize;
                let ew = params.element_width;
                if payload.len() != 2 + 2 * rows * ew {
                    return Err(Error::Decode("commitment record length mismatch".into()));
                }
                let mut elems = Vec::with_capacity(2 * rows);
                for chunk in payload[2..].chunks(ew) {
                    elems.push(GroupElement::decode(backend, chunk)?);
                }
                let psi = elems.split_off(rows);
                records.push(DkgRecord::Commitments {
                    dealer,
                    phi: elems,
                    psi,
                });
            }
            DKG_REC_SHARE => {
                let sw = params.scalar_width;
                if payload.len() != 2 * sw {
                    return Err(Error::Decode("share record length mismatch".into()));
                }
                records.push(DkgRecord::Share {
                    dealer,
                    recipient,
                    phi_share: Scalar::decode(backend, &payload[..sw])?,
                    psi_share: Scalar::decode(backend, &payload[sw..])?,
                });
            }
            DKG_REC_COMPLAINT => {
                records.push(DkgRecord::Complaint {
                    accuser: recipient,
                    dealer,
                });
            }
            other => {
                return Err(Error::Decode(format!(
                    "unknown dkg record type 0x{other:02x}"
                )))
            }
        }
    }
    Ok(records)
}

/// Flatten dealer outputs into broadcast + share records.
pub fn records_from_deals(deals: &[DealerOutput]) -> Vec<DkgRecord> {
    let mut records = Vec::new();
    for deal in deals {
        records.push(DkgRecord::Commitments {
            dealer: deal.dealer,
            phi: deal.phi_commitments.clone(),
            psi: deal.psi_commitments.clone(),
        });
    }
    for deal in deals {
        for (recipient, (s, r)) in &deal.shares {
            records.push(DkgRecord::Share {
                dealer: deal.dealer,
                recipient: *recipient,
                phi_share: s.clone(),
                psi_share: r.clone(),
            });
        }
    }
    records
}

/// Rebuild dealer outputs from a transcript, for replay.
pub fn deals_from_records(
    records: &[DkgRecord],
) -> Result<(Vec<DealerOutput>, Vec<Complaint>), Error> {
    let mut deals: BTreeMap<SignerIndex, DealerOutput> = BTreeMap::new();
    let mut complaints = Vec::new();
    for record in records {
        match record {
            DkgRecord::Commitments { dealer, phi, psi } => {
                deals.insert(
                    *dealer,
                    DealerOutput {
                        dealer: *dealer,
                        phi_commitments: phi.clone(),
                        psi_commitments: psi.clone(),
                        shares: BTreeMap::new(),
                    },
                );
            }
            DkgRecord::Share {
                dealer,
                recipient,
                phi_share,
                psi_share,
            } => {
                let deal = deals.get_mut(dealer).ok_or_else(|| {
                    Error::Decode(format!("share before commitments for dealer {dealer}"))
                })?;
                deal.shares
                    .insert(*recipient, (phi_share.clone(), psi_share.clone()));
            }
            DkgRecord::Complaint { accuser, dealer } => {
                complaints.push(Complaint {
                    accuser: *accuser,
                    dealer: *dealer,
                });
            }
        }
    }
    Ok((deals.into_values().collect(), complaints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::dlog_bruteforce;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ts(v: u64) -> Scalar {
        Scalar::from_u64(Backend::Test, v)
    }

    fn te(v: u8) -> GroupElement {
        GroupElement::decode(Backend::Test, &[v]).unwrap()
    }

    fn set(indices: &[u16]) -> BTreeSet<u16> {
        indices.iter().copied().collect()
    }

    #[test]
    fn dealing_vector_t1_n3() {
        // phi = 4 + 2X over Z_11: shares 6, 8, 10; commitments (2^4, 2^2) = (16, 4).
        let phi = Polynomial::from_coefficients(vec![ts(4), ts(2)]);
        let psi = Polynomial::from_coefficients(vec![ts(1), ts(3)]);
        let deal = deal_from_polynomials(1, 3, &phi, &psi);
        assert_eq!(deal.shares[&1].0, ts(6));
        assert_eq!(deal.shares[&2].0, ts(8));
        assert_eq!(deal.shares[&3].0, ts(10));
        assert_eq!(deal.phi_commitments, vec![te(16), te(4)]);
    }

    #[test]
    fn degenerate_constant_polynomial() {
        let phi = Polynomial::from_coefficients(vec![ts(7)]);
        let psi = Polynomial::from_coefficients(vec![ts(2)]);
        let deal = deal_from_polynomials(1, 3, &phi, &psi);
        for k in 1..=3 {
            assert_eq!(deal.shares[&k].0, ts(7));
        }
    }

    #[test]
    fn share_verification_vector() {
        // g^6 = 18 equals C0 * C1^1 = 16 * 4 mod 23 = 18.
        let phi_rows = vec![te(16), te(4)];
        let psi = Polynomial::from_coefficients(vec![ts(1), ts(3)]);
        let psi_rows = psi.commitments();
        let share = (ts(6), psi.evaluate(&ts(1)));
        let (ok, complaint) = dkg_verify_share(1, &share, &phi_rows, &psi_rows);
        assert!(ok && complaint.is_none());

        let bad = (ts(7), psi.evaluate(&ts(1)));
        let (ok, complaint) = dkg_verify_share(1, &bad, &phi_rows, &psi_rows);
        assert!(!ok && complaint.is_some());
    }

    #[test]
    fn tampered_commitment_row_caught_by_some_recipient() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let deal = dkg_deal(1, 1, 3, Backend::Test, &mut rng).unwrap();
        let mut rows = deal.phi_commitments.clone();
        rows[1] = rows[1].mul(&GroupElement::generator(Backend::Test));
        let mut caught = false;
        for k in 1..=3 {
            let (ok, _) = dkg_verify_share(k, &deal.shares[&k], &rows, &deal.psi_commitments);
            caught |= !ok;
        }
        assert!(caught);
    }

    #[test]
    fn self_check_holds_for_random_deals() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for trial in 0..100 {
            let t = 1 + (trial % 3) as u16;
            let n = t + 2;
            let deal = dkg_deal(1, t, n, Backend::Test, &mut rng).unwrap();
            for k in 1..=n {
                let (ok, _) = dkg_verify_share(
                    k,
                    &deal.shares[&k],
                    &deal.phi_commitments,
                    &deal.psi_commitments,
                );
                assert!(ok);
            }
        }
    }

    #[test]
    fn lagrange_vectors() {
        let t123 = set(&[1, 2, 3]);
        assert_eq!(lagrange_at_zero(Backend::Test, &t123, 1).unwrap(), ts(3));
        assert_eq!(lagrange_at_zero(Backend::Test, &t123, 2).unwrap(), ts(8));
        assert_eq!(lagrange_at_zero(Backend::Test, &t123, 3).unwrap(), ts(1));
        // weights of the constant polynomial 1 sum to 1
        let sum = ts(3).add(&ts(8)).add(&ts(1));
        assert_eq!(sum, ts(1));

        let t12 = set(&[1, 2]);
        assert_eq!(lagrange_at_zero(Backend::Test, &t12, 1).unwrap(), ts(2));
        assert_eq!(lagrange_at_zero(Backend::Test, &t12, 2).unwrap(), ts(10));

        // singleton: empty product
        assert_eq!(
            lagrange_at_zero(Backend::Test, &set(&[4]), 4).unwrap(),
            ts(1)
        );

        assert_eq!(
            lagrange_at_zero(Backend::Test, &t12, 3),
            Err(Error::NotAMember(3))
        );
        assert!(matches!(
            lagrange_at_zero(Backend::Test, &set(&[0, 1]), 1),
            Err(Error::InvalidIndex(_))
        ));
    }

    #[test]
    fn lagrange_recovers_constants_of_explicit_polynomials() {
        // Oracle: evaluate a known polynomial, re-weight shares, compare with
        // its constant term.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let poly = Polynomial::random(Backend::Test, 2, &mut rng);
            let t = set(&[1, 3, 4]);
            let mut acc = Scalar::zero(Backend::Test);
            for &i in &t {
                let share = poly.evaluate(&ts(i as u64));
                acc = acc.add(&share.mul(&lagrange_at_zero(Backend::Test, &t, i).unwrap()));
            }
            assert_eq!(&acc, poly.constant());
        }
    }

    #[test]
    fn weighted_commitment_vector() {
        // t=1, T={1,2}, w1=3, w2=4: R = (2^3)^2 * (2^4)^10 = 2^2 = 4.
        let nonces = BTreeMap::from([(1u16, ts(3)), (2u16, ts(4))]);
        let bundle =
            assemble_weighted_bundle(Backend::Test, &nonces, 1, index_set_digest(&set(&[1, 2])))
                .unwrap();
        assert_eq!(bundle.commitment, te(4));
        assert_eq!(bundle.entry(1), Some(&te(8))); // 2^3
        assert_eq!(bundle.entry(2), Some(&te(16))); // 2^4
    }

    #[test]
    fn weighted_singleton_is_plain_commitment() {
        let nonces = BTreeMap::from([(4u16, ts(6))]);
        let bundle =
            assemble_weighted_bundle(Backend::Test, &nonces, 1, index_set_digest(&set(&[4])))
                .unwrap();
        assert_eq!(
            bundle.commitment,
            GroupElement::base_exp(Backend::Test, &ts(6))
        );
    }

    #[test]
    fn local_share_value_vector() {
        // stub c=5, x1=6, w1=3: s1 = 3 + 5*6 mod 11 = 0
        assert_eq!(share_scalar(&ts(3), &ts(5), &ts(1), &ts(6)), ts(0));
    }

    #[test]
    fn threshold_share_equation_vector() {
        // honest share from the vector above verifies, mutations do not
        let vk = GroupElement::base_exp(Backend::Test, &ts(6));
        let r1 = GroupElement::base_exp(Backend::Test, &ts(3));
        let share = SignatureShare {
            signer: 1,
            value: ts(0),
            ctr: 1,
        };
        assert!(verify_threshold_share(&share, &r1, &vk, &ts(5)));
        let bad = SignatureShare {
            signer: 1,
            value: ts(1),
            ctr: 1,
        };
        assert!(!verify_threshold_share(&bad, &r1, &vk, &ts(5)));
        // neighbour's verification key
        let vk2 = GroupElement::base_exp(Backend::Test, &ts(7));
        assert!(!verify_threshold_share(&share, &r1, &vk2, &ts(5)));
    }

    fn honest_setup(
        t: u16,
        n: u16,
        seed: u64,
    ) -> (ThresholdParams, Vec<ThresholdShare>, BTreeMap<u16, Seed>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        run_dkg(t, n, Backend::Test, &mut rng).unwrap()
    }

    fn sign_over(
        params: &ThresholdParams,
        shares: &mut [ThresholdShare],
        seeds: &BTreeMap<u16, Seed>,
        indices: &BTreeSet<u16>,
        message: &[u8],
        ctr: u64,
    ) -> (Vec<SignatureShare>, CommitmentBundle, BTreeMap<u16, Scalar>) {
        let (bare, nonces) =
            threshold_commitment(Backend::Test, seeds, params.t, indices, message, ctr).unwrap();
        let mut sig_shares = Vec::new();
        for state in shares.iter_mut().filter(|s| indices.contains(&s.index)) {
            let mut bundle = bare.clone();
            bundle.seal(&state.mac_key);
            sig_shares
                .push(threshold_local_sign(state, message, &bundle, params, indices).unwrap());
        }
        (sig_shares, bare, nonces)
    }

    #[test]
    fn dkg_finalize_vector_and_reconstruction_oracle() {
        // 3 dealers, t=1: any 2 shares reconstruct the summed constants.
        let (params, shares, _) = honest_setup(1, 3, 42);
        // mpk = g^{sum of constants}; check via interpolation of shares
        for pair in [[1u16, 2], [1, 3], [2, 3]] {
            let t: BTreeSet<u16> = pair.iter().copied().collect();
            let mut x = Scalar::zero(Backend::Test);
            for &i in &t {
                let share = shares.iter().find(|s| s.index == i).unwrap();
                x = x.add(
                    &share
                        .secret_share()
                        .mul(&lagrange_at_zero(Backend::Test, &t, i).unwrap()),
                );
            }
            assert_eq!(GroupElement::base_exp(Backend::Test, &x), params.mpk);
            assert_eq!(dlog_bruteforce(&params.mpk).unwrap(), x);
        }
        // vk consistency
        for share in &shares {
            assert_eq!(
                GroupElement::base_exp(Backend::Test, share.secret_share()),
                *share.verification_key()
            );
        }
    }

    #[test]
    fn single_dealer_mpk_is_its_constant_commitment() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let deal = dkg_deal(1, 1, 2, Backend::Test, &mut rng).unwrap();
        let c0 = deal.phi_commitments[0].clone();
        let (params, _, _) = dkg_finalize(&[deal], &[], 1, 2).unwrap();
        assert_eq!(params.mpk, c0);
    }

    #[test]
    fn bad_share_forces_restart() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut deal = dkg_deal(1, 1, 3, Backend::Test, &mut rng).unwrap();
        deal.shares.get_mut(&2).unwrap().0 = deal.shares[&2].0.add(&ts(1));
        assert_eq!(
            dkg_finalize(&[deal], &[], 1, 3),
            Err(Error::DkgRestartRequired)
        );

        // an explicit complaint also aborts
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let deal = dkg_deal(1, 1, 3, Backend::Test, &mut rng).unwrap();
        let complaints = vec![Complaint {
            accuser: 2,
            dealer: 1,
        }];
        assert_eq!(
            dkg_finalize(&[deal], &complaints, 1, 3),
            Err(Error::DkgRestartRequired)
        );
    }

    #[test]
    fn honest_threshold_signing_end_to_end() {
        let (params, mut shares, seeds) = honest_setup(1, 3, 100);
        let t = set(&[1, 3]);
        let message = b"threshold";
        let (sig_shares, bundle, nonces) = sign_over(&params, &mut shares, &seeds, &t, message, 1);
        let sig = reconstruct(&sig_shares, &bundle, &params, &t, message, Some(&nonces)).unwrap();
        let mut state = VerifierState::new();
        assert!(verify_threshold(message, &sig, &params, &mut state).is_accept());

        // exact identities: dlog(R) = weighted nonce sum, dlog(mpk) = weighted key sum
        let w_sum = dlog_bruteforce(&sig.commitment).unwrap();
        let mut expected_w = Scalar::zero(Backend::Test);
        for (&i, w) in &nonces {
            expected_w = expected_w.add(&w.mul(&lagrange_at_zero(Backend::Test, &t, i).unwrap()));
        }
        assert_eq!(w_sum, expected_w);
    }

    #[test]
    fn threshold_unmet_at_boundary() {
        let (params, _, seeds) = honest_setup(2, 5, 200);
        let t = set(&[1, 2]); // |T| = t = 2 < t+1
        assert_eq!(
            threshold_commitment(Backend::Test, &seeds, params.t, &t, b"m", 1),
            Err(Error::ThresholdUnmet { have: 2, need: 3 })
        );
    }

    #[test]
    fn robustness_filters_bad_shares_with_nonce_access() {
        let (params, mut shares, seeds) = honest_setup(2, 5, 300);
        let t = set(&[1, 2, 3, 4, 5]);
        let message = b"robust";
        let (mut sig_shares, bundle, nonces) =
            sign_over(&params, &mut shares, &seeds, &t, message, 1);
        // corrupt two shares (t = 2)
        sig_shares[1].value = sig_shares[1].value.add(&ts(1));
        sig_shares[3].value = ts(9);
        let sig = reconstruct(&sig_shares, &bundle, &params, &t, message, Some(&nonces)).unwrap();
        assert!(verify_threshold(message, &sig, &params, &mut VerifierState::new()).is_accept());
    }

    #[test]
    fn exactly_t_plus_one_with_one_bad_share_is_insufficient() {
        let (params, mut shares, seeds) = honest_setup(1, 3, 400);
        let t = set(&[1, 2]);
        let message = b"thin";
        let (mut sig_shares, bundle, nonces) =
            sign_over(&params, &mut shares, &seeds, &t, message, 1);
        sig_shares[0].value = sig_shares[0].value.add(&ts(5));
        assert_eq!(
            reconstruct(&sig_shares, &bundle, &params, &t, message, Some(&nonces)),
            Err(Error::InsufficientShares { have: 1, need: 2 })
        );
    }

    #[test]
    fn tampered_vector_entry_detected_by_signer() {
        let (params, mut shares, seeds) = honest_setup(1, 3, 500);
        let t = set(&[1, 2]);
        let message = b"tamper";
        let (bare, _) =
            threshold_commitment(Backend::Test, &seeds, params.t, &t, message, 1).unwrap();
        let mut bundle = bare;
        let slot = bundle.vector.iter().position(|(i, _)| *i == 1).unwrap();
        bundle.vector[slot].1 = bundle.vector[slot]
            .1
            .mul(&GroupElement::generator(Backend::Test));
        // rebalance the weighted product so only the per-signer check can fire
        let mut weighted = GroupElement::identity(Backend::Test);
        for (i, r) in &bundle.vector {
            weighted = weighted.mul(&r.exp(&lagrange_at_zero(Backend::Test, &t, *i).unwrap()));
        }
        bundle.commitment = weighted;
        let state = shares.iter_mut().find(|s| s.index == 1).unwrap();
        bundle.seal(state.mac_key());
        assert_eq!(
            threshold_local_sign(state, message, &bundle, &params, &t),
            Err(Error::AggregatorTampering { signer: 1 })
        );
    }

    #[test]
    fn verify_threshold_rejects_small_sets_and_stale_counters() {
        let (params, shares, seeds) = honest_setup(1, 3, 600);
        let t = set(&[2, 3]);
        let message = b"verify rejects";
        let mut shares_a = shares.clone();
        let (sig_shares, bundle, nonces) =
            sign_over(&params, &mut shares_a, &seeds, &t, message, 4);
        let sig = reconstruct(&sig_shares, &bundle, &params, &t, message, Some(&nonces)).unwrap();

        let mut small = sig.clone();
        small.signers = vec![2];
        small.coefficients = BTreeMap::from([(2u16, ts(1))]);
        assert_eq!(
            verify_threshold(message, &small, &params, &mut VerifierState::new()),
            Verdict::Reject(RejectReason::ThresholdUnmet { have: 1, need: 2 })
        );

        let mut state = VerifierState::new();
        assert!(verify_threshold(message, &sig, &params, &mut state).is_accept());

        // an older but otherwise honest signature (fresh signer state, lower
        // counter) is stale from this verifier's point of view
        let mut shares_b = shares.clone();
        let (old_shares, old_bundle, old_nonces) =
            sign_over(&params, &mut shares_b, &seeds, &t, message, 3);
        let old_sig = reconstruct(
            &old_shares,
            &old_bundle,
            &params,
            &t,
            message,
            Some(&old_nonces),
        )
        .unwrap();
        assert_eq!(
            verify_threshold(message, &old_sig, &params, &mut state),
            Verdict::Reject(RejectReason::StaleCounter {
                presented: 3,
                last_seen: 4
            })
        );
    }

    #[test]
    fn dkg_transcript_round_trip_and_replay() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mut deals = Vec::new();
        for dealer in 1..=3 {
            deals.push(dkg_deal(dealer, 1, 3, Backend::Test, &mut rng).unwrap());
        }
        let records = records_from_deals(&deals);
        let bytes = encode_dkg_transcript(&records);
        let decoded = decode_dkg_transcript(Backend::Test, &bytes).unwrap();
        assert_eq!(decoded, records);
        let (replayed, complaints) = deals_from_records(&decoded).unwrap();
        assert!(complaints.is_empty());
        let (params_a, _, _) = dkg_finalize(&deals, &[], 1, 3).unwrap();
        let (params_b, _, _) = dkg_finalize(&replayed, &[], 1, 3).unwrap();
        assert_eq!(params_a, params_b);
    }

    #[test]
    fn share_file_round_trip() {
        let (_, mut shares, _) = honest_setup(1, 3, 800);
        shares[0].advance_counter([3u8; 32], 9).unwrap();
        let text = shares[0].to_file_string();
        let parsed = ThresholdShare::from_file_string(&text).unwrap();
        assert_eq!(parsed.index, shares[0].index);
        assert_eq!(parsed.secret_share(), shares[0].secret_share());
        assert_eq!(parsed.stored_counter(&[3u8; 32]), Some(9));
    }

    #[test]
    fn threshold_params_encode_round_trip() {
        let (params, _, _) = honest_setup(2, 5, 900);
        assert_eq!(ThresholdParams::decode(&params.encode()).unwrap(), params);
    }
}
