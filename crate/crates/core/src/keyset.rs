//! Framework setup and public-key aggregation.
//!
//! Setup draws the master and aggregation seeds, generates per-signer key
//! pairs and MAC keys, and derives each signer's randomness seed from the
//! master seed.  Aggregation computes PRF coefficients over the ordered key
//! list and the coefficient-weighted product of public keys.

use std::collections::BTreeMap;

use rand::rngs::OsRng;
use rand::RngCore;
use sha2::{Digest, Sha512};

use crate::error::Error;
use crate::group::{Backend, GroupElement, Scalar};
use crate::prf::{derive_seed, key_order, prf, seed_refresh, DomainTag, Seed};

pub type SignerIndex = u16;

/// A signer set with its public keys, canonically ordered by key encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerSet {
    members: BTreeMap<SignerIndex, GroupElement>,
}

impl SignerSet {
    pub fn new(members: BTreeMap<SignerIndex, GroupElement>) -> Result<Self, Error> {
        if members.is_empty() {
            return Err(Error::InvalidParams("signer set must be nonempty".into()));
        }
        let keys: Vec<GroupElement> = members.values().cloned().collect();
        key_order(&keys)?; // rejects duplicate keys
        Ok(SignerSet { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: SignerIndex) -> bool {
        self.members.contains_key(&index)
    }

    pub fn public_key(&self, index: SignerIndex) -> Option<&GroupElement> {
        self.members.get(&index)
    }

    pub fn members(&self) -> &BTreeMap<SignerIndex, GroupElement> {
        &self.members
    }

    /// Indices ordered by the lexicographic order of their key encodings.
    pub fn ordered_indices(&self) -> Vec<SignerIndex> {
        let mut pairs: Vec<(&SignerIndex, &GroupElement)> = self.members.iter().collect();
        pairs.sort_by_key(|(_, pk)| pk.encode());
        pairs.into_iter().map(|(i, _)| *i).collect()
    }

    /// Concatenated key encodings in canonical order.  This byte string is
    /// the `S_ordered` input of the challenge hash and nonce PRF.
    pub fn encoding(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for index in self.ordered_indices() {
            out.extend_from_slice(&self.members[&index].encode());
        }
        out
    }

    /// Digest of the canonical encoding; keys counter stores on both sides.
    pub fn digest(&self) -> [u8; 32] {
        set_digest(&self.encoding())
    }
}

/// Digest of a canonical signer-set encoding; the counter-store key used by
/// signers, aggregator, and verifiers alike.
pub fn set_digest(encoding: &[u8]) -> [u8; 32] {
    let mut hasher = Sha512::new();
    hasher.update(b"pitpm-set");
    hasher.update(encoding);
    let mut out = [0u8; 32];
    out.copy_from_slice(&hasher.finalize()[..32]);
    out
}

/// Public protocol parameters.  The aggregation seed itself stays inside
/// [`AggregatorSecrets`]; only its fingerprint is meant to circulate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicParams {
    pub group: Backend,
    pub n: u16,
    pub gctr: u64,
    pub aggregator_id: Vec<u8>,
}

pub const PARAMS_MAGIC: &[u8; 6] = b"PITPM1";

impl PublicParams {
    /// Versioned binary header: magic, group tag, n, gctr,
    /// aggregator_id length + bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 1 + 2 + 8 + 2 + self.aggregator_id.len());
        out.extend_from_slice(PARAMS_MAGIC);
        out.push(self.group.tag());
        out.extend_from_slice(&self.n.to_be_bytes());
        out.extend_from_slice(&self.gctr.to_be_bytes());
        out.extend_from_slice(&(self.aggregator_id.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.aggregator_id);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() < 19 || &bytes[..6] != PARAMS_MAGIC {
            return Err(Error::Decode("bad public-params header".into()));
        }
        let group = Backend::from_tag(bytes[6])?;
        let n = u16::from_be_bytes([bytes[7], bytes[8]]);
        let gctr = u64::from_be_bytes(bytes[9..17].try_into().expect("sized"));
        let id_len = u16::from_be_bytes([bytes[17], bytes[18]]) as usize;
        if bytes.len() != 19 + id_len {
            return Err(Error::Decode("public-params length mismatch".into()));
        }
        Ok(PublicParams {
            group,
            n,
            gctr,
            aggregator_id: bytes[19..].to_vec(),
        })
    }
}

/// A signer's private state: key pair, randomness seed, MAC key, and the
/// per-set monotonic counter store.
#[derive(Debug, Clone)]
pub struct SignerPacket {
    pub index: SignerIndex,
    secret_key: Scalar,
    public_key: GroupElement,
    seed: Seed,
    mac_key: Seed,
    pub epoch: u64,
    counters: BTreeMap<[u8; 32], u64>,
}

impl SignerPacket {
    pub fn new(
        index: SignerIndex,
        secret_key: Scalar,
        public_key: GroupElement,
        seed: Seed,
        mac_key: Seed,
    ) -> Result<Self, Error> {
        if secret_key.is_zero() {
            return Err(Error::InvalidScalar("secret key must be nonzero".into()));
        }
        let expected = GroupElement::base_exp(secret_key.backend(), &secret_key);
        if expected != public_key {
            return Err(Error::InvalidParams(
                "public key does not match secret key".into(),
            ));
        }
        Ok(SignerPacket {
            index,
            secret_key,
            public_key,
            seed,
            mac_key,
            epoch: 0,
            counters: BTreeMap::new(),
        })
    }

    pub fn backend(&self) -> Backend {
        self.secret_key.backend()
    }

    pub fn public_key(&self) -> &GroupElement {
        &self.public_key
    }

    pub fn secret_key(&self) -> &Scalar {
        &self.secret_key
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn mac_key(&self) -> &Seed {
        &self.mac_key
    }

    pub fn stored_counter(&self, set_digest: &[u8; 32]) -> Option<u64> {
        self.counters.get(set_digest).copied()
    }

    /// Enforce the hardware monotonicity rule: the presented counter must be
    /// strictly greater than the stored one for this set.  Advances on success.
    pub fn advance_counter(&mut self, set_digest: [u8; 32], ctr: u64) -> Result<(), Error> {
        if let Some(&stored) = self.counters.get(&set_digest) {
            if ctr <= stored {
                return Err(Error::CounterReplay {
                    presented: ctr,
                    stored,
                });
            }
        }
        self.counters.insert(set_digest, ctr);
        Ok(())
    }

    /// Apply an epoch refresh delivered over the authenticated channel.
    pub fn apply_refresh(&mut self, epoch: u64, refresh_token: &[u8]) {
        self.seed = seed_refresh(&self.seed, epoch, refresh_token);
        self.epoch = epoch;
    }

    /// Plaintext fixture format: hex fields, one per line.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group = {:02x}\n", self.backend().tag()));
        out.push_str(&format!(
            "index = {}\n",
            hex::encode(self.index.to_be_bytes())
        ));
        out.push_str(&format!("x = {}\n", hex::encode(self.secret_key.encode())));
        out.push_str(&format!("pk = {}\n", hex::encode(self.public_key.encode())));
        out.push_str(&format!("seed = {}\n", hex::encode(self.seed.as_bytes())));
        out.push_str(&format!(
            "mac_key = {}\n",
            hex::encode(self.mac_key.as_bytes())
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
                .ok_or_else(|| Error::Decode(format!("bad packet line: {line}")))?;
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
                .ok_or_else(|| Error::Decode(format!("packet missing field {name}")))?;
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
        let mut packet = SignerPacket::new(
            u16::from_be_bytes(index_bytes),
            Scalar::decode(backend, &get("x")?)?,
            GroupElement::decode(backend, &get("pk")?)?,
            Seed::from_slice(&get("seed")?)?,
            Seed::from_slice(&get("mac_key")?)?,
        )?;
        packet.epoch = u64::from_be_bytes(epoch_bytes);
        packet.counters = counters;
        Ok(packet)
    }
}

/// Aggregator-private material produced at setup.
#[derive(Debug, Clone)]
pub struct AggregatorSecrets {
    pub group: Backend,
    pub master_seed: Seed,
    pub seed_agg: Seed,
    pub signer_seeds: BTreeMap<SignerIndex, Seed>,
    pub mac_keys: BTreeMap<SignerIndex, Seed>,
    pub operator_key: Seed,
}

pub const VAULT_MAGIC: &[u8; 4] = b"PVLT";

impl AggregatorSecrets {
    /// Fingerprint of the aggregation seed; the only public trace of it.
    pub fn seed_agg_fingerprint(&self) -> [u8; 32] {
        self.seed_agg.fingerprint()
    }

    /// Binary vault file.  Magic, group tag, 8-byte epoch reserved field,
    /// master seed, aggregation seed, operator key, signer count, then
    /// (index, seed, mac key) records.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(VAULT_MAGIC);
        out.push(self.group.tag());
        out.extend_from_slice(self.master_seed.as_bytes());
        out.extend_from_slice(self.seed_agg.as_bytes());
        out.extend_from_slice(self.operator_key.as_bytes());
        out.extend_from_slice(&(self.signer_seeds.len() as u16).to_be_bytes());
        for (index, seed) in &self.signer_seeds {
            out.extend_from_slice(&index.to_be_bytes());
            out.extend_from_slice(seed.as_bytes());
            out.extend_from_slice(self.mac_keys[index].as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() < 4 + 1 + 96 + 2 || &bytes[..4] != VAULT_MAGIC {
            return Err(Error::Decode("bad vault header".into()));
        }
        let group = Backend::from_tag(bytes[4])?;
        let master_seed = Seed::from_slice(&bytes[5..37])?;
        let seed_agg = Seed::from_slice(&bytes[37..69])?;
        let operator_key = Seed::from_slice(&bytes[69..101])?;
        let count = u16::from_be_bytes([bytes[101], bytes[102]]) as usize;
        let mut signer_seeds = BTreeMap::new();
        let mut mac_keys = BTreeMap::new();
        let mut offset = 103;
        for _ in 0..count {
            if bytes.len() < offset + 2 + 64 {
                return Err(Error::Decode("vault truncated".into()));
            }
            let index = u16::from_be_bytes([bytes[offset], bytes[offset + 1]]);
            signer_seeds.insert(index, Seed::from_slice(&bytes[offset + 2..offset + 34])?);
            mac_keys.insert(index, Seed::from_slice(&bytes[offset + 34..offset + 66])?);
            offset += 66;
        }
        if offset != bytes.len() {
            return Err(Error::Decode("vault trailing bytes".into()));
        }
        Ok(AggregatorSecrets {
            group,
            master_seed,
            seed_agg,
            signer_seeds,
            mac_keys,
            operator_key,
        })
    }
}

/// Framework setup with fresh system randomness.
pub fn setup(
    lambda_bits: u32,
    n: u16,
    group: Backend,
) -> Result<(PublicParams, Vec<SignerPacket>, AggregatorSecrets), Error> {
    setup_with_rng(lambda_bits, n, group, &mut OsRng)
}

/// Setup with a caller-supplied randomness source, used by the deterministic
/// harness.  Seeds and keys are drawn from `rng`; everything else is derived.
pub fn setup_with_rng(
    lambda_bits: u32,
    n: u16,
    group: Backend,
    rng: &mut dyn RngCore,
) -> Result<(PublicParams, Vec<SignerPacket>, AggregatorSecrets), Error> {
    if n < 1 {
        return Err(Error::InvalidParams("need at least one signer".into()));
    }
    if !(128..=256).contains(&lambda_bits) {
        return Err(Error::InvalidParams(format!(
            "security parameter {lambda_bits} outside supported range 128..=256"
        )));
    }
    let master_seed = Seed::random(rng);
    let seed_agg = Seed::random(rng);
    let operator_key = Seed::random(rng);

    let mut packets = Vec::with_capacity(n as usize);
    let mut signer_seeds = BTreeMap::new();
    let mut mac_keys = BTreeMap::new();
    let mut seen_keys = std::collections::BTreeSet::new();
    for index in 1..=n {
        // Key ordering needs pairwise-distinct public keys; resample on a
        // collision.  Only the tiny test group (ten usable keys) can actually
        // run out, so cap the attempts and fail loudly.
        let mut attempts = 0;
        let (secret, public) = loop {
            let secret = Scalar::random_nonzero(group, rng);
            let public = GroupElement::base_exp(group, &secret);
            if seen_keys.insert(public.clone()) {
                break (secret, public);
            }
            attempts += 1;
            if attempts > 64 {
                return Err(Error::InvalidParams(format!(
                    "cannot draw {n} distinct keys on this backend"
                )));
            }
        };
        let seed = derive_seed(
            master_seed.as_bytes(),
            DomainTag::SeedDerive,
            &(index as u64).to_be_bytes(),
        );
        let mac_key = Seed::random(rng);
        signer_seeds.insert(index, seed.clone());
        mac_keys.insert(index, mac_key.clone());
        packets.push(SignerPacket::new(index, secret, public, seed, mac_key)?);
    }

    let pp = PublicParams {
        group,
        n,
        gctr: 0,
        aggregator_id: b"pitpm-aggregator".to_vec(),
    };
    let secrets = AggregatorSecrets {
        group,
        master_seed,
        seed_agg,
        signer_seeds,
        mac_keys,
        operator_key,
    };
    Ok((pp, packets, secrets))
}

/// Aggregated public key together with the per-signer coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatedKey {
    pub apk: GroupElement,
    pub coefficients: BTreeMap<SignerIndex, Scalar>,
    pub ordered_list_digest: [u8; 32],
}

/// apk = prod pk_i^{a_i} for explicit coefficients.
pub fn aggregate_with_coefficients(
    set: &SignerSet,
    coefficients: &BTreeMap<SignerIndex, Scalar>,
) -> Result<AggregatedKey, Error> {
    let backend = set
        .members()
        .values()
        .next()
        .expect("nonempty by construction")
        .backend();
    let mut apk = GroupElement::identity(backend);
    for (index, pk) in set.members() {
        let a = coefficients
            .get(index)
            .ok_or_else(|| Error::ShareSetInvalid(format!("missing coefficient for {index}")))?;
        apk = apk.mul(&pk.exp(a));
    }
    Ok(AggregatedKey {
        apk,
        coefficients: coefficients.clone(),
        ordered_list_digest: set.digest(),
    })
}

/// Coefficient derivation: a_i = PRF(seed_agg, COEFF, encode(pk_i) || encode(L)).
/// A zero draw (possible on the tiny test group) is re-derived with an
/// appended retry counter byte until nonzero, since the security argument
/// needs every a_i nonzero.
pub fn derive_coefficient(seed_agg: &Seed, pk: &GroupElement, list_encoding: &[u8]) -> Scalar {
    let backend = pk.backend();
    let mut data = pk.encode();
    data.extend_from_slice(list_encoding);
    let mut candidate = prf(backend, seed_agg, DomainTag::Coeff, &data);
    let mut retry: u8 = 0;
    while candidate.is_zero() {
        retry = retry.checked_add(1).expect("coefficient retry overflow");
        let mut retry_data = data.clone();
        retry_data.push(retry);
        candidate = prf(backend, seed_agg, DomainTag::Coeff, &retry_data);
    }
    candidate
}

/// Public key aggregation with PRF coefficients.  Deterministic and
/// independent of input order.
pub fn key_agg(set: &SignerSet, seed_agg: &Seed) -> Result<AggregatedKey, Error> {
    let list_encoding = set.encoding();
    let mut coefficients = BTreeMap::new();
    for (index, pk) in set.members() {
        coefficients.insert(*index, derive_coefficient(seed_agg, pk, &list_encoding));
    }
    aggregate_with_coefficients(set, &coefficients)
}
