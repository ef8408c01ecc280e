//! Correctness (exact response identities via the dlog oracle), determinism,
//! constant signature core, and corruption-rejection fuzzing.

mod common;

use common::{honest_sign, multisig_fixture, public_keys, serve_bundle};
use pitpm_core::group::{dlog_bruteforce, Backend, Scalar};
use pitpm_core::multisig::{
    local_sign, verify, verify_share, MultiSignature, SignatureShare, Verdict, VerifierState,
};
use pitpm_core::prf::hash_challenge;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn correctness_500_randomized_honest_runs() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC0DE);
    for trial in 0..500u64 {
        let n = (trial % 5 + 1) as u16;
        let mut fx = multisig_fixture(Backend::Test, n, &mut rng);
        let message: Vec<u8> = (0..rng.gen_range(1..48)).map(|_| rng.gen()).collect();
        let ctr = rng.gen_range(1..1_000_000);
        let sig = honest_sign(&mut fx, &message, ctr);

        // verify accepts
        let verdict = verify(
            &message,
            &sig,
            &public_keys(&fx),
            Some(&fx.agg),
            &mut VerifierState::new(),
        );
        assert!(verdict.is_accept(), "trial {trial}");

        // exact identity: s = sum(w_i) + c * sum(a_i * x_i) mod 11
        let w_sum = dlog_bruteforce(&sig.commitment).unwrap();
        let mut key_sum = Scalar::zero(Backend::Test);
        for p in &fx.packets {
            key_sum = key_sum.add(&fx.agg.coefficients[&p.index].mul(p.secret_key()));
        }
        assert_eq!(
            sig.response,
            w_sum.add(&sig.challenge.mul(&key_sum)),
            "trial {trial}"
        );
    }
}

#[test]
fn share_verification_soundness_exhaustive() {
    // Over the oracle group every candidate share value can be enumerated:
    // verify_share must accept exactly the honest transcript value.
    let mut rng = ChaCha20Rng::seed_from_u64(0x50F1);
    let mut fx = multisig_fixture(Backend::Test, 3, &mut rng);
    let message = b"soundness";
    let ctr = 1;
    let bundle = serve_bundle(&fx, message, ctr, 1);
    let c = hash_challenge(
        &bundle.commitment,
        &fx.agg.apk,
        message,
        &fx.set.encoding(),
        ctr,
    );
    let indices: Vec<u16> = fx.packets.iter().map(|p| p.index).collect();
    for (slot, index) in indices.into_iter().enumerate() {
        let sealed = serve_bundle(&fx, message, ctr, index);
        let honest = local_sign(&mut fx.packets[slot], message, &sealed, &fx.agg, &fx.set).unwrap();
        let r_i = bundle.entry(index).unwrap();
        let pk_i = fx.set.public_key(index).unwrap();
        let a_i = &fx.agg.coefficients[&index];
        let mut accepted = Vec::new();
        for candidate in 0..11u64 {
            let share = SignatureShare {
                signer: index,
                value: Scalar::from_u64(Backend::Test, candidate),
                ctr,
            };
            if verify_share(&share, r_i, pk_i, a_i, &c) {
                accepted.push(share.value);
            }
        }
        assert_eq!(accepted, vec![honest.value], "signer {index}");
    }
}

#[test]
fn signature_decode_edge_cases() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xDEC0);
    let mut fx = multisig_fixture(Backend::Test, 2, &mut rng);
    let sig = honest_sign(&mut fx, b"decode", 1);
    let wire = sig.encode();

    // truncation anywhere must fail cleanly
    for cut in 0..wire.len() {
        assert!(
            MultiSignature::decode(Backend::Test, &wire[..cut]).is_err(),
            "cut at {cut}"
        );
    }
    // trailing garbage refused
    let mut padded = wire.clone();
    padded.push(0);
    assert!(MultiSignature::decode(Backend::Test, &padded).is_err());
    // wrong magic refused
    let mut bad_magic = wire.clone();
    bad_magic[0] ^= 0xff;
    assert!(MultiSignature::decode(Backend::Test, &bad_magic).is_err());
    // wrong backend width refused
    assert!(MultiSignature::decode(Backend::Prod, &wire).is_err());
}

#[test]
fn encode_decode_round_trip_over_random_honest_signatures() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x27Au64);
    for trial in 0..50u64 {
        let n = (trial % 5 + 1) as u16;
        let mut fx = multisig_fixture(Backend::Test, n, &mut rng);
        let message = format!("round trip {trial}");
        let sig = honest_sign(&mut fx, message.as_bytes(), 1);
        let decoded = MultiSignature::decode(Backend::Test, &sig.encode()).unwrap();
        assert_eq!(decoded, sig);
    }
}

#[test]
fn determinism_bit_identical_signatures() {
    // Same seeds, keys, message, counter, and set twice over: the signature
    // bytes must agree exactly.
    let run = || {
        let mut rng = ChaCha20Rng::seed_from_u64(0xD01C);
        let mut fx = multisig_fixture(Backend::Test, 4, &mut rng);
        honest_sign(&mut fx, b"fixed message", 7).encode()
    };
    assert_eq!(run(), run());
}

#[test]
fn signature_core_is_constant_size() {
    // The tiny group tops out at ten distinct keys, so the hundred-signer
    // comparison runs on the production backend.
    let mut rng = ChaCha20Rng::seed_from_u64(0x517E);
    let mut small = multisig_fixture(Backend::Prod, 1, &mut rng);
    let mut large = multisig_fixture(Backend::Prod, 100, &mut rng);
    let sig_small = honest_sign(&mut small, b"m", 1);
    let sig_large = honest_sign(&mut large, b"m", 1);
    assert_eq!(sig_small.core_bytes().len(), sig_large.core_bytes().len());
    assert!(sig_large.encode().len() > sig_small.encode().len());
}

#[test]
fn corruption_fuzz_1000_single_bit_flips() {
    // Production backend: on the 11-element oracle group a corrupted counter
    // or message re-hashes onto the honest challenge one time in eleven,
    // which is precisely the collision resistance the real order provides.
    let mut rng = ChaCha20Rng::seed_from_u64(0xF122);
    let mut fx = multisig_fixture(Backend::Prod, 3, &mut rng);
    let message = b"fuzz target message".to_vec();
    let sig = honest_sign(&mut fx, &message, 1);
    let pks = public_keys(&fx);
    let wire = sig.encode();
    let params = Backend::Prod.params();
    // byte ranges of R, c, s, ctr inside the wire format
    let core_len = params.element_width + 2 * params.scalar_width;
    let mutable_sig_bytes = 4 + core_len + 8; // magic excluded below

    for trial in 0..1000 {
        let corrupt_message = trial % 5 == 0;
        if corrupt_message {
            let mut m = message.clone();
            let bit = rng.gen_range(0..m.len() * 8);
            m[bit / 8] ^= 1 << (bit % 8);
            let verdict = verify(&m, &sig, &pks, Some(&fx.agg), &mut VerifierState::new());
            assert!(
                !verdict.is_accept(),
                "corrupted message accepted at trial {trial}"
            );
        } else {
            let mut bytes = wire.clone();
            let bit = rng.gen_range(4 * 8..mutable_sig_bytes * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            match MultiSignature::decode(Backend::Prod, &bytes) {
                Err(_) => {} // rejected at decode
                Ok(corrupted) => {
                    let verdict =
                        verify(&message, &corrupted, &pks, None, &mut VerifierState::new());
                    assert!(
                        !verdict.is_accept(),
                        "corrupted signature accepted at trial {trial}"
                    );
                }
            }
        }
    }
}

#[test]
fn verifier_counter_updates_linearize_under_concurrency() {
    // Eight threads verify distinct sessions against one shared state; the
    // per-set freshness bookkeeping must linearize to the maximum counter.
    use std::sync::{Arc, Mutex};

    let mut rng = ChaCha20Rng::seed_from_u64(0x11EA);
    let fx0 = multisig_fixture(Backend::Test, 2, &mut rng);
    let mut signatures = Vec::new();
    for ctr in 1..=16u64 {
        let mut fresh = common::MultisigFixture {
            set: fx0.set.clone(),
            packets: fx0.packets.clone(),
            agg: fx0.agg.clone(),
            seeds: fx0.seeds.clone(),
            mac_keys: fx0.mac_keys.clone(),
            backend: fx0.backend,
        };
        signatures.push((ctr, honest_sign(&mut fresh, b"concurrent", ctr)));
    }
    let pks = public_keys(&fx0);
    let state = Arc::new(Mutex::new(VerifierState::new()));
    let digest = fx0.set.digest();
    let mut threads = Vec::new();
    for chunk in signatures.chunks(2) {
        let chunk = chunk.to_vec();
        let state = state.clone();
        let pks = pks.clone();
        let agg = fx0.agg.clone();
        threads.push(std::thread::spawn(move || {
            for (_, sig) in &chunk {
                let mut guard = state.lock().unwrap();
                // accept or stale, never anything else
                match verify(b"concurrent", sig, &pks, Some(&agg), &mut guard) {
                    Verdict::Accept => {}
                    Verdict::Reject(pitpm_core::multisig::RejectReason::StaleCounter {
                        ..
                    }) => {}
                    other => panic!("unexpected verdict {other:?}"),
                }
            }
        }));
    }
    for thread in threads {
        thread.join().unwrap();
    }
    // the shared state converged on some counter at least as large as any
    // accepted one, and at most the maximum issued
    let last = state.lock().unwrap().last_seen(&digest).unwrap();
    assert!(last >= 1 && last <= 16);
}

#[test]
fn prod_backend_round_matches() {
    // One full honest round on the production group.
    let mut rng = ChaCha20Rng::seed_from_u64(0x960D);
    let mut fx = multisig_fixture(Backend::Prod, 3, &mut rng);
    let sig = honest_sign(&mut fx, b"prod message", 1);
    let verdict = verify(
        b"prod message",
        &sig,
        &public_keys(&fx),
        Some(&fx.agg),
        &mut VerifierState::new(),
    );
    assert_eq!(verdict, Verdict::Accept);
}
