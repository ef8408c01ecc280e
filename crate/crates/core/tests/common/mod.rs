//! Shared in-process protocol driver for the end-to-end test suites.

use std::collections::BTreeMap;

use pitpm_core::group::{product, Backend, GroupElement};
use pitpm_core::keyset::{key_agg, setup_with_rng, AggregatedKey, SignerPacket, SignerSet};
use pitpm_core::multisig::{combine, derive_nonce, local_sign, CommitmentBundle, MultiSignature};
use pitpm_core::prf::{msg_digest, Seed};
use rand_chacha::ChaCha20Rng;

pub struct MultisigFixture {
    pub set: SignerSet,
    pub packets: Vec<SignerPacket>,
    pub agg: AggregatedKey,
    pub seeds: BTreeMap<u16, Seed>,
    pub mac_keys: BTreeMap<u16, Seed>,
    pub backend: Backend,
}

pub fn multisig_fixture(backend: Backend, n: u16, rng: &mut ChaCha20Rng) -> MultisigFixture {
    let (_, packets, secrets) = setup_with_rng(128, n, backend, rng).unwrap();
    let set = SignerSet::new(
        packets
            .iter()
            .map(|p| (p.index, p.public_key().clone()))
            .collect(),
    )
    .unwrap();
    let agg = key_agg(&set, &secrets.seed_agg).unwrap();
    MultisigFixture {
        set,
        packets,
        agg,
        seeds: secrets.signer_seeds,
        mac_keys: secrets.mac_keys,
        backend,
    }
}

/// What the aggregator would serve for this request, sealed for `recipient`.
pub fn serve_bundle(
    fx: &MultisigFixture,
    message: &[u8],
    ctr: u64,
    recipient: u16,
) -> CommitmentBundle {
    let digest = msg_digest(message);
    let encoding = fx.set.encoding();
    let mut vector = Vec::new();
    for index in fx.set.ordered_indices() {
        let (_, r) = derive_nonce(fx.backend, &fx.seeds[&index], &digest, ctr, &encoding);
        vector.push((index, r));
    }
    let commitment = product(fx.backend, vector.iter().map(|(_, r)| r));
    let mut bundle = CommitmentBundle {
        commitment,
        vector,
        ctr,
        set_digest: fx.set.digest(),
        mac: [0; 32],
    };
    bundle.seal(&fx.mac_keys[&recipient]);
    bundle
}

/// Full honest signing round; every signer gets its own sealed copy.
pub fn honest_sign(fx: &mut MultisigFixture, message: &[u8], ctr: u64) -> MultiSignature {
    let indices: Vec<u16> = fx.packets.iter().map(|p| p.index).collect();
    let mut shares = Vec::new();
    for (slot, index) in indices.iter().enumerate() {
        let bundle = serve_bundle(fx, message, ctr, *index);
        shares.push(local_sign(&mut fx.packets[slot], message, &bundle, &fx.agg, &fx.set).unwrap());
    }
    let bundle = serve_bundle(fx, message, ctr, indices[0]);
    combine(&shares, &bundle, &fx.agg, &fx.set, message).unwrap()
}

pub fn public_keys(fx: &MultisigFixture) -> BTreeMap<u16, GroupElement> {
    fx.packets
        .iter()
        .map(|p| (p.index, p.public_key().clone()))
        .collect()
}
