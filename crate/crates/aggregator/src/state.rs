//! The coordination service state: seed vault, per-set counter policing,
//! idempotent bundle cache, and seed-refresh epochs.
//!
//! Every state mutation (counter advance, cache insert, epoch bump) goes
//! through `&mut self`, so wrapping the state in a mutex gives the service
//! linearizable counter checks.

use std::collections::{BTreeMap, BTreeSet};

use pitpm_core::group::{product, Backend, GroupElement, Scalar};
use pitpm_core::keyset::{set_digest, AggregatorSecrets, SignerIndex};
use pitpm_core::multisig::{derive_nonce, CommitmentBundle};
use pitpm_core::prf::{mac_bytes, mac_verify, seed_refresh, Seed};
use pitpm_core::threshold::{index_set_encoding, threshold_commitment_digested};
use pitpm_core::Error;

/// Which scheme a request is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Multisig,
    Threshold,
}

impl Mode {
    pub fn byte(self) -> u8 {
        match self {
            Mode::Multisig => 0x01,
            Mode::Threshold => 0x02,
        }
    }

    pub fn from_byte(byte: u8) -> Result<Self, Error> {
        match byte {
            0x01 => Ok(Mode::Multisig),
            0x02 => Ok(Mode::Threshold),
            other => Err(Error::Decode(format!("unknown mode byte 0x{other:02x}"))),
        }
    }
}

/// A signer's commitment request.  The message travels as its canonical
/// digest; the set travels as member indices plus the canonical set encoding
/// the nonce PRF consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentRequest {
    pub mode: Mode,
    pub m_digest: [u8; 32],
    pub ctr: u64,
    pub requester: SignerIndex,
    /// Member indices in canonical set order.
    pub members: Vec<SignerIndex>,
    /// Canonical set encoding: ordered key encodings for multi-signatures,
    /// sorted 2-byte BE indices for threshold sets.
    pub set_encoding: Vec<u8>,
    pub mac: [u8; 32],
}

impl CommitmentRequest {
    fn mac_context(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"request");
        out.push(self.mode.byte());
        out.extend_from_slice(&self.m_digest);
        out.extend_from_slice(&self.ctr.to_be_bytes());
        out.extend_from_slice(&self.requester.to_be_bytes());
        out.extend_from_slice(&(self.members.len() as u16).to_be_bytes());
        for index in &self.members {
            out.extend_from_slice(&index.to_be_bytes());
        }
        out.extend_from_slice(&(self.set_encoding.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.set_encoding);
        out
    }

    pub fn seal(&mut self, mac_key: &Seed) {
        self.mac = mac_bytes(mac_key, &self.mac_context());
    }

    pub fn mac_valid(&self, mac_key: &Seed) -> bool {
        mac_verify(mac_key, &self.mac_context(), &self.mac)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.mac_context();
        out.drain(..b"request".len());
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        let take = |off: &mut usize, len: usize| -> Result<&[u8], Error> {
            if bytes.len() < *off + len {
                return Err(Error::Decode("request truncated".into()));
            }
            let slice = &bytes[*off..*off + len];
            *off += len;
            Ok(slice)
        };
        let mut off = 0;
        let mode = Mode::from_byte(take(&mut off, 1)?[0])?;
        let m_digest: [u8; 32] = take(&mut off, 32)?.try_into().expect("sized");
        let ctr = u64::from_be_bytes(take(&mut off, 8)?.try_into().expect("sized"));
        let requester = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized"));
        let count = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            members.push(u16::from_be_bytes(
                take(&mut off, 2)?.try_into().expect("sized"),
            ));
        }
        let enc_len = u16::from_be_bytes(take(&mut off, 2)?.try_into().expect("sized")) as usize;
        let set_encoding = take(&mut off, enc_len)?.to_vec();
        let mac: [u8; 32] = take(&mut off, 32)?.try_into().expect("sized");
        if off != bytes.len() {
            return Err(Error::Decode("request trailing bytes".into()));
        }
        Ok(CommitmentRequest {
            mode,
            m_digest,
            ctr,
            requester,
            members,
            set_encoding,
            mac,
        })
    }
}

/// One served signing session, kept for idempotent re-serving and for the
/// combiner's nonce access.
#[derive(Debug, Clone)]
pub struct CachedSession {
    pub ctr: u64,
    pub m_digest: [u8; 32],
    pub bundle: CommitmentBundle,
    pub nonces: BTreeMap<SignerIndex, Scalar>,
}

/// Authenticated seed-refresh instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefreshToken {
    pub epoch: u64,
    pub nonce: Vec<u8>,
    pub mac: [u8; 32],
}

impl RefreshToken {
    fn context(epoch: u64, nonce: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"refresh");
        out.extend_from_slice(&epoch.to_be_bytes());
        out.extend_from_slice(nonce);
        out
    }

    pub fn issue(operator_key: &Seed, epoch: u64, nonce: Vec<u8>) -> Self {
        let mac = mac_bytes(operator_key, &Self::context(epoch, &nonce));
        RefreshToken { epoch, nonce, mac }
    }

    pub fn mac_valid(&self, operator_key: &Seed) -> bool {
        mac_verify(
            operator_key,
            &Self::context(self.epoch, &self.nonce),
            &self.mac,
        )
    }
}

/// Fixed attestation quote.  Real attestation is out of scope; clients get a
/// constant structure and verification passes with a logged warning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationQuote {
    pub aggregator_id: Vec<u8>,
    pub epoch: u64,
    pub marker: [u8; 16],
}

pub const ATTESTATION_MARKER: [u8; 16] = *b"pitpm-stub-quote";

pub fn verify_attestation(quote: &AttestationQuote) -> bool {
    log::warn!(
        "aggregator attestation is a stub; accepting fixed quote for {:?} unconditionally",
        String::from_utf8_lossy(&quote.aggregator_id)
    );
    quote.marker == ATTESTATION_MARKER
}

/// The aggregator.  Seeds never appear in any response payload; per-set
/// counters strictly increase across freshly served requests.
#[derive(Debug, Clone)]
pub struct AggregatorState {
    backend: Backend,
    aggregator_id: Vec<u8>,
    seeds: BTreeMap<SignerIndex, Seed>,
    mac_keys: BTreeMap<SignerIndex, Seed>,
    operator_key: Seed,
    /// Threshold t when serving a threshold deployment.
    threshold: Option<u16>,
    pub epoch: u64,
    pub available: bool,
    counters: BTreeMap<[u8; 32], u64>,
    cache: BTreeMap<[u8; 32], CachedSession>,
    pub gctr: u64,
}

impl AggregatorState {
    pub fn from_secrets(secrets: &AggregatorSecrets, aggregator_id: Vec<u8>) -> Self {
        AggregatorState {
            backend: secrets.group,
            aggregator_id,
            seeds: secrets.signer_seeds.clone(),
            mac_keys: secrets.mac_keys.clone(),
            operator_key: secrets.operator_key.clone(),
            threshold: None,
            epoch: 0,
            available: true,
            counters: BTreeMap::new(),
            cache: BTreeMap::new(),
            gctr: 0,
        }
    }

    /// Threshold deployment: the seed store from the distributed setup, MAC
    /// keys derived from the signing seeds on both sides.
    pub fn for_threshold(
        backend: Backend,
        seeds: BTreeMap<SignerIndex, Seed>,
        operator_key: Seed,
        t: u16,
        aggregator_id: Vec<u8>,
    ) -> Self {
        let mac_keys = seeds
            .iter()
            .map(|(i, seed)| (*i, pitpm_core::threshold::threshold_mac_key(seed)))
            .collect();
        AggregatorState {
            backend,
            aggregator_id,
            seeds,
            mac_keys,
            operator_key,
            threshold: Some(t),
            epoch: 0,
            available: true,
            counters: BTreeMap::new(),
            cache: BTreeMap::new(),
            gctr: 0,
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn aggregator_id(&self) -> &[u8] {
        &self.aggregator_id
    }

    pub fn mac_key(&self, signer: SignerIndex) -> Option<&Seed> {
        self.mac_keys.get(&signer)
    }

    pub fn operator_key(&self) -> &Seed {
        &self.operator_key
    }

    pub fn last_served(&self, digest: &[u8; 32]) -> Option<u64> {
        self.counters.get(digest).copied()
    }

    /// Combiner-side access to a served session's nonce scalars.
    pub fn session_nonces(
        &self,
        digest: &[u8; 32],
        ctr: u64,
    ) -> Option<&BTreeMap<SignerIndex, Scalar>> {
        self.cache
            .get(digest)
            .filter(|session| session.ctr == ctr)
            .map(|session| &session.nonces)
    }

    /// Serve a commitment request: authenticate, police the per-set counter,
    /// derive nonces from stored seeds, and publish the full vector together
    /// with the (plain or Lagrange-weighted) global commitment.  Re-sent
    /// requests inside the current counter window get the cached bundle.
    pub fn serve_commitment(&mut self, req: &CommitmentRequest) -> Result<CommitmentBundle, Error> {
        let requester_key = self
            .mac_keys
            .get(&req.requester)
            .ok_or(Error::UnknownSigner(req.requester))?
            .clone();
        if !req.mac_valid(&requester_key) {
            return Err(Error::AuthFailure("request MAC invalid".into()));
        }
        if req.members.is_empty() {
            return Err(Error::InvalidParams("empty signer set".into()));
        }
        for index in &req.members {
            if !self.seeds.contains_key(index) {
                return Err(Error::UnknownSigner(*index));
            }
        }
        let digest = set_digest(&req.set_encoding);

        if let Some(cached) = self.cache.get(&digest) {
            if cached.ctr == req.ctr {
                // Identical request: serve the cached session.  The same
                // counter with a different message is a reuse attempt.
                if cached.m_digest != req.m_digest {
                    return Err(Error::CounterReplay {
                        presented: req.ctr,
                        stored: cached.ctr,
                    });
                }
                let mut bundle = cached.bundle.clone();
                bundle.seal(&requester_key);
                return Ok(bundle);
            }
        }
        if let Some(&last) = self.counters.get(&digest) {
            if req.ctr <= last {
                return Err(Error::CounterReplay {
                    presented: req.ctr,
                    stored: last,
                });
            }
        }

        let (mut bundle, nonces) = match req.mode {
            Mode::Multisig => {
                let mut nonces = BTreeMap::new();
                let mut vector = Vec::with_capacity(req.members.len());
                for &index in &req.members {
                    let (w, r) = derive_nonce(
                        self.backend,
                        &self.seeds[&index],
                        &req.m_digest,
                        req.ctr,
                        &req.set_encoding,
                    );
                    nonces.insert(index, w);
                    vector.push((index, r));
                }
                let commitment = product(self.backend, vector.iter().map(|(_, r)| r));
                let bundle = CommitmentBundle {
                    commitment,
                    vector,
                    ctr: req.ctr,
                    set_digest: digest,
                    mac: [0; 32],
                };
                (bundle, nonces)
            }
            Mode::Threshold => {
                let t = self
                    .threshold
                    .ok_or_else(|| Error::InvalidParams("not a threshold deployment".into()))?;
                let indices: BTreeSet<SignerIndex> = req.members.iter().copied().collect();
                if index_set_encoding(&indices) != req.set_encoding {
                    return Err(Error::InvalidParams(
                        "set encoding does not match members".into(),
                    ));
                }
                let (bundle, nonces) = threshold_commitment_digested(
                    self.backend,
                    &self.seeds,
                    t,
                    &indices,
                    &req.m_digest,
                    req.ctr,
                )?;
                (bundle, nonces)
            }
        };

        self.counters.insert(digest, req.ctr);
        self.gctr = self.gctr.max(req.ctr);
        self.cache.insert(
            digest,
            CachedSession {
                ctr: req.ctr,
                m_digest: req.m_digest,
                bundle: bundle.clone(),
                nonces,
            },
        );
        bundle.seal(&requester_key);
        Ok(bundle)
    }

    /// Epoch refresh: every stored randomness seed is replaced through the
    /// one-way refresh. Past signatures stay verifiable since verification
    /// never touches seeds; signers apply the same refresh locally.
    pub fn refresh_epoch(&mut self, token: &RefreshToken) -> Result<u64, Error> {
        if !token.mac_valid(&self.operator_key) {
            return Err(Error::AuthFailure("refresh token MAC invalid".into()));
        }
        if token.epoch != self.epoch + 1 {
            return Err(Error::InvalidParams(format!(
                "refresh epoch {} out of order (current {})",
                token.epoch, self.epoch
            )));
        }
        for seed in self.seeds.values_mut() {
            *seed = seed_refresh(seed, token.epoch, &token.nonce);
        }
        self.epoch = token.epoch;
        self.cache.clear();
        Ok(self.epoch)
    }

    pub fn attestation_quote(&self) -> AttestationQuote {
        AttestationQuote {
            aggregator_id: self.aggregator_id.clone(),
            epoch: self.epoch,
            marker: ATTESTATION_MARKER,
        }
    }

    /// Test-only window into stored seed bytes, for confidentiality scans.
    pub fn seed_material(&self) -> Vec<[u8; 32]> {
        self.seeds.values().map(|s| *s.as_bytes()).collect()
    }
}

/// Build a multisig commitment request and seal it with the signer's key.
pub fn build_multisig_request(
    set: &pitpm_core::keyset::SignerSet,
    message: &[u8],
    ctr: u64,
    requester: SignerIndex,
    mac_key: &Seed,
) -> CommitmentRequest {
    let mut req = CommitmentRequest {
        mode: Mode::Multisig,
        m_digest: pitpm_core::prf::msg_digest(message),
        ctr,
        requester,
        members: set.ordered_indices(),
        set_encoding: set.encoding(),
        mac: [0; 32],
    };
    req.seal(mac_key);
    req
}

/// Build a threshold commitment request sealed with the signer's key.
pub fn build_threshold_request(
    indices: &BTreeSet<SignerIndex>,
    message: &[u8],
    ctr: u64,
    requester: SignerIndex,
    mac_key: &Seed,
) -> CommitmentRequest {
    let mut req = CommitmentRequest {
        mode: Mode::Threshold,
        m_digest: pitpm_core::prf::msg_digest(message),
        ctr,
        requester,
        members: indices.iter().copied().collect(),
        set_encoding: index_set_encoding(indices),
        mac: [0; 32],
    };
    req.seal(mac_key);
    req
}

/// Coordinator for the interactive fallback when the aggregator is offline:
/// each signer contributes a fresh self-generated commitment through the
/// transport, and the coordinator assembles the same bundle shape (plain
/// product for multi-signatures, weighted for threshold sets).  There is no
/// aggregator MAC in this mode; the bundle rides the authenticated channel
/// the transport models.
pub trait CommitmentRelay {
    fn fetch_commitment(
        &mut self,
        signer: SignerIndex,
        m_digest: &[u8; 32],
        ctr: u64,
        set_encoding: &[u8],
    ) -> Result<GroupElement, Error>;
}

pub fn fallback_coordinate(
    backend: Backend,
    mode: Mode,
    members: &[SignerIndex],
    set_encoding: &[u8],
    m_digest: &[u8; 32],
    ctr: u64,
    relay: &mut dyn CommitmentRelay,
) -> Result<CommitmentBundle, Error> {
    let mut vector = Vec::with_capacity(members.len());
    for &signer in members {
        let r = relay.fetch_commitment(signer, m_digest, ctr, set_encoding)?;
        vector.push((signer, r));
    }
    let digest = set_digest(set_encoding);
    let commitment = match mode {
        Mode::Multisig => product(backend, vector.iter().map(|(_, r)| r)),
        Mode::Threshold => {
            let indices: BTreeSet<SignerIndex> = members.iter().copied().collect();
            let mut weighted = GroupElement::identity(backend);
            for (index, r) in &vector {
                let weight = pitpm_core::threshold::lagrange_at_zero(backend, &indices, *index)?;
                weighted = weighted.mul(&r.exp(&weight));
            }
            weighted
        }
    };
    Ok(CommitmentBundle {
        commitment,
        vector,
        ctr,
        set_digest: digest,
        mac: [0; 32],
    })
}
