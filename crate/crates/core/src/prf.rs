//! Keyed PRF, challenge hash, canonical key ordering, and seed refresh.
//!
//! Every invocation is domain-separated by a one-byte tag prepended to the
//! hashed input, so the protocol's several PRF uses can never collide.
//! The PRF is HMAC-SHA-512; scalar outputs are produced by interpreting the
//! 64-byte mac as a big-endian integer and reducing mod q (wide reduction).

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha512};

use crate::error::Error;
use crate::group::{Backend, GroupElement, Scalar};

type HmacSha512 = Hmac<Sha512>;

pub const SEED_LEN: usize = 32;

/// 32-byte opaque key material.  Never serialized into protocol messages;
/// only the authenticated setup distribution and aggregator storage carry it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Seed([u8; SEED_LEN]);

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Redacted on purpose.
        write!(f, "Seed(..)")
    }
}

impl Seed {
    pub fn from_bytes(bytes: [u8; SEED_LEN]) -> Self {
        Seed(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, Error> {
        let arr: [u8; SEED_LEN] = bytes
            .try_into()
            .map_err(|_| Error::Decode(format!("seed must be {SEED_LEN} bytes")))?;
        Ok(Seed(arr))
    }

    pub fn random(rng: &mut dyn RngCore) -> Self {
        let mut bytes = [0u8; SEED_LEN];
        rng.fill_bytes(&mut bytes);
        Seed(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SEED_LEN] {
        &self.0
    }

    /// Public fingerprint of a secret seed (safe to publish).
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha512::new();
        hasher.update(b"pitpm-seed-fingerprint");
        hasher.update(self.0);
        truncate32(&hasher.finalize())
    }
}

/// Domain separator carried by every PRF/hash invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Nonce,
    Coeff,
    SeedDerive,
    SigningSeed,
    Challenge,
    Refresh,
    Mac,
}

impl DomainTag {
    pub fn byte(self) -> u8 {
        match self {
            DomainTag::Nonce => 0x01,
            DomainTag::Coeff => 0x02,
            DomainTag::SeedDerive => 0x03,
            DomainTag::SigningSeed => 0x04,
            DomainTag::Challenge => 0x05,
            DomainTag::Refresh => 0x06,
            DomainTag::Mac => 0x07,
        }
    }

    pub const ALL: [DomainTag; 7] = [
        DomainTag::Nonce,
        DomainTag::Coeff,
        DomainTag::SeedDerive,
        DomainTag::SigningSeed,
        DomainTag::Challenge,
        DomainTag::Refresh,
        DomainTag::Mac,
    ];
}

fn truncate32(bytes: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&bytes[..32]);
    out
}

fn hmac_raw(key: &[u8], tag: DomainTag, data: &[u8]) -> [u8; 64] {
    let mut mac = HmacSha512::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(&[tag.byte()]);
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// Keyed PRF into Z_q.
pub fn prf(backend: Backend, key: &Seed, tag: DomainTag, data: &[u8]) -> Scalar {
    Scalar::reduce_bytes(backend, &hmac_raw(key.as_bytes(), tag, data))
}

/// Keyed PRF into fresh 32-byte seed material.  The key may be arbitrary
/// bytes (e.g. a scalar encoding) since HMAC accepts any key length.
pub fn derive_seed(key: &[u8], tag: DomainTag, data: &[u8]) -> Seed {
    Seed(truncate32(&hmac_raw(key, tag, data)))
}

/// Message authentication code over a caller-framed context.
pub fn mac_bytes(key: &Seed, context: &[u8]) -> [u8; 32] {
    truncate32(&hmac_raw(key.as_bytes(), DomainTag::Mac, context))
}

pub fn mac_verify(key: &Seed, context: &[u8], tag: &[u8]) -> bool {
    mac_bytes(key, context) == tag
}

/// Canonical 32-byte digest of a message.  Requests and PRF inputs carry this
/// digest instead of the message itself, identically on both sides.
pub fn msg_digest(message: &[u8]) -> [u8; 32] {
    let mut hasher = Sha512::new();
    hasher.update(b"pitpm-msg");
    hasher.update(message);
    truncate32(&hasher.finalize())
}

/// Challenge hash.  Input layout (normative, bit-exact):
/// tag CHALLENGE || encode(R) || encode(key) || len(M) as 8-byte BE || M
/// || len(ordered_set) as 8-byte BE || ordered_set || ctr as 8-byte BE.
pub fn hash_challenge(
    commitment: &GroupElement,
    key: &GroupElement,
    message: &[u8],
    ordered_set: &[u8],
    ctr: u64,
) -> Scalar {
    let backend = commitment.backend();
    assert_eq!(backend, key.backend(), "mixed-backend challenge");
    let mut hasher = Sha512::new();
    hasher.update([DomainTag::Challenge.byte()]);
    hasher.update(commitment.encode());
    hasher.update(key.encode());
    hasher.update((message.len() as u64).to_be_bytes());
    hasher.update(message);
    hasher.update((ordered_set.len() as u64).to_be_bytes());
    hasher.update(ordered_set);
    hasher.update(ctr.to_be_bytes());
    Scalar::reduce_bytes(backend, &hasher.finalize())
}

/// Lexicographic sort of public keys by canonical encoding.  Deterministic
/// and independent of input order; duplicates are rejected.
pub fn key_order(keys: &[GroupElement]) -> Result<Vec<GroupElement>, Error> {
    if keys.is_empty() {
        return Err(Error::InvalidParams("key set must be nonempty".into()));
    }
    let mut sorted: Vec<GroupElement> = keys.to_vec();
    sorted.sort_by_key(|key| key.encode());
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::DuplicateKey);
        }
    }
    Ok(sorted)
}

/// One-way seed refresh: H(tag REFRESH || old || epoch as 8-byte BE || token).
pub fn seed_refresh(old: &Seed, epoch: u64, refresh_token: &[u8]) -> Seed {
    let mut hasher = Sha512::new();
    hasher.update([DomainTag::Refresh.byte()]);
    hasher.update(old.as_bytes());
    hasher.update(epoch.to_be_bytes());
    hasher.update(refresh_token);
    Seed(truncate32(&hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::dlog_bruteforce;

    fn seed(byte: u8) -> Seed {
        Seed::from_bytes([byte; 32])
    }

    #[test]
    fn prf_is_deterministic() {
        let a = prf(Backend::Test, &seed(1), DomainTag::Nonce, b"abc");
        let b = prf(Backend::Test, &seed(1), DomainTag::Nonce, b"abc");
        assert_eq!(a, b);
    }

    #[test]
    fn domain_tags_separate_outputs() {
        let a = prf(Backend::Prod, &seed(1), DomainTag::Nonce, b"d");
        let b = prf(Backend::Prod, &seed(1), DomainTag::Coeff, b"d");
        assert_ne!(a, b);
    }

    #[test]
    fn key_order_sorts_by_encoding() {
        let e9 = GroupElement::decode(Backend::Test, &[9]).unwrap();
        let e8 = GroupElement::decode(Backend::Test, &[8]).unwrap();
        let ordered = key_order(&[e9.clone(), e8.clone()]).unwrap();
        assert_eq!(ordered, vec![e8, e9]);
    }

    #[test]
    fn key_order_singleton_and_permutations() {
        let pk = GroupElement::decode(Backend::Test, &[13]).unwrap();
        assert_eq!(
            key_order(std::slice::from_ref(&pk)).unwrap(),
            vec![pk.clone()]
        );

        let keys: Vec<GroupElement> = [16u8, 4, 9, 2, 13]
            .iter()
            .map(|b| GroupElement::decode(Backend::Test, &[*b]).unwrap())
            .collect();
        let reference = key_order(&keys).unwrap();
        // a few permutations, including reversed
        let mut reversed = keys.clone();
        reversed.reverse();
        assert_eq!(key_order(&reversed).unwrap(), reference);
        let rotated: Vec<GroupElement> = keys[2..].iter().chain(&keys[..2]).cloned().collect();
        assert_eq!(key_order(&rotated).unwrap(), reference);
    }

    #[test]
    fn key_order_rejects_duplicates() {
        let pk = GroupElement::decode(Backend::Test, &[9]).unwrap();
        assert_eq!(key_order(&[pk.clone(), pk]), Err(Error::DuplicateKey));
    }

    #[test]
    fn challenge_sensitive_to_message_and_counter() {
        let r = GroupElement::decode(
            Backend::Prod,
            &GroupElement::generator(Backend::Prod).encode(),
        )
        .unwrap();
        let apk = GroupElement::base_exp(Backend::Prod, &Scalar::from_u64(Backend::Prod, 42));
        let base = hash_challenge(&r, &apk, b"message", b"set", 0);
        // flip one bit of M
        assert_ne!(base, hash_challenge(&r, &apk, b"messagf", b"set", 0));
        // ctr 0 vs 1
        assert_ne!(base, hash_challenge(&r, &apk, b"message", b"set", 1));
        // deterministic
        assert_eq!(base, hash_challenge(&r, &apk, b"message", b"set", 0));
    }

    #[test]
    fn seed_refresh_one_way_and_deterministic() {
        let s = seed(7);
        let once = seed_refresh(&s, 1, b"token");
        assert_eq!(once, seed_refresh(&s, 1, b"token"));
        assert_ne!(once, seed_refresh(&s, 2, b"token"));
        assert_ne!(once.as_bytes(), s.as_bytes());
    }

    #[test]
    fn mac_round_trip_and_tamper() {
        let key = seed(9);
        let tag = mac_bytes(&key, b"context");
        assert!(mac_verify(&key, b"context", &tag));
        assert!(!mac_verify(&key, b"contexu", &tag));
        assert!(!mac_verify(&seed(10), b"context", &tag));
    }

    #[test]
    fn prf_scalar_lands_in_field() {
        // On the tiny backend the wide reduction must stay in [0, 11).
        for i in 0..50u8 {
            let s = prf(Backend::Test, &seed(i), DomainTag::Nonce, &[i]);
            let y = GroupElement::base_exp(Backend::Test, &s);
            assert_eq!(dlog_bruteforce(&y).unwrap(), s);
        }
    }
}
