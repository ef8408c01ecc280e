//! End-to-end protocol runs against the simulated network: the partially
//! interactive protocol in both schemes, the aggregator-offline fallback,
//! and the all-to-all interactive baseline for comparison.
//!
//! Runs are deterministic per seed: protocol randomness and latency draws
//! come from independent streams of the same seeded generator.

use std::collections::{BTreeMap, BTreeSet};

use pitpm_aggregator::state::{
    build_multisig_request, build_threshold_request, fallback_coordinate, AggregatorState,
    CommitmentRelay, Mode,
};
use pitpm_core::group::{Backend, GroupElement, Scalar};
use pitpm_core::keyset::{
    aggregate_with_coefficients, key_agg, setup_with_rng, AggregatedKey, SignerPacket, SignerSet,
};
use pitpm_core::multisig::{
    combine, local_sign, local_sign_with_nonce, verify, CommitmentBundle, MultiSignature,
    VerifierState,
};
use pitpm_core::prf::msg_digest;
use pitpm_core::threshold::{
    index_set_digest, lagrange_at_zero, reconstruct, run_dkg, threshold_local_sign,
    threshold_local_sign_with_nonce, verify_threshold, ThresholdShare,
};
use pitpm_core::{Error, Seed};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::HarnessError;
use crate::fault::FaultPlan;
use crate::sim::Simulator;
use crate::transcript::{Party, Phase, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Multisig,
    Threshold { t: u16 },
}

impl Scheme {
    pub fn label(self) -> String {
        match self {
            Scheme::Multisig => "multisig".into(),
            Scheme::Threshold { t } => format!("threshold({t})"),
        }
    }
}

/// Outcome of one simulated run.  Protocol failures are data, not panics:
/// the transcript up to the failure rides along.
#[derive(Debug)]
pub struct RunReport {
    pub signature: Result<MultiSignature, Error>,
    pub transcript: Transcript,
    pub wall_ms: u64,
    /// Some(outcome) when a signature was produced and checked.
    pub verified: Option<bool>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.signature.is_ok() && self.verified == Some(true)
    }
}

fn run_message(seed: u64) -> Vec<u8> {
    format!("pitpm simulated run {seed}").into_bytes()
}

fn finish(
    sim: Simulator,
    signature: Result<MultiSignature, Error>,
    verified: Option<bool>,
) -> RunReport {
    let (transcript, wall_ms) = sim.into_transcript();
    RunReport {
        signature,
        transcript,
        wall_ms,
        verified,
    }
}

/// Compromised-aggregator rewrite: replace each victim's entry, rebalance
/// the aggregate so the vector still multiplies out, and re-seal with the
/// recipient key the aggregator legitimately holds.
fn tamper_bundle(
    bundle: &mut CommitmentBundle,
    victims: &BTreeSet<u16>,
    weighted_over: Option<&BTreeSet<u16>>,
    mac_key: &Seed,
) {
    if victims.is_empty() {
        return;
    }
    let backend = bundle.commitment.backend();
    for (index, r) in bundle.vector.iter_mut() {
        if victims.contains(index) {
            *r = r.mul(&GroupElement::generator(backend));
        }
    }
    bundle.commitment = match weighted_over {
        None => pitpm_core::group::product(backend, bundle.vector.iter().map(|(_, r)| r)),
        Some(indices) => {
            let mut acc = GroupElement::identity(backend);
            for (index, r) in &bundle.vector {
                let weight = lagrange_at_zero(backend, indices, *index).expect("members validated");
                acc = acc.mul(&r.exp(&weight));
            }
            acc
        }
    };
    bundle.seal(mac_key);
}

/// Deterministic end-to-end run of the partially interactive protocol.
pub fn run_pitpm(
    backend: Backend,
    n: u16,
    scheme: Scheme,
    faults: &FaultPlan,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    if n < 1 {
        return Err(HarnessError::Fault("need at least one signer".into()));
    }
    if let Scheme::Threshold { t } = scheme {
        if t >= n {
            return Err(HarnessError::Fault(format!(
                "threshold t={t} needs t < n={n}"
            )));
        }
    }
    faults.validate(n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sim = Simulator::new(seed, faults.latency);
    match scheme {
        Scheme::Multisig => run_multisig(backend, n, faults, &mut rng, sim, seed),
        Scheme::Threshold { t } => run_threshold(backend, n, t, faults, &mut rng, sim, seed),
    }
}

fn run_multisig(
    backend: Backend,
    n: u16,
    faults: &FaultPlan,
    rng: &mut ChaCha20Rng,
    mut sim: Simulator,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    let (pp, mut packets, secrets) = setup_with_rng(128, n, backend, rng)?;
    let set = SignerSet::new(
        packets
            .iter()
            .map(|p| (p.index, p.public_key().clone()))
            .collect(),
    )?;
    let agg = key_agg(&set, &secrets.seed_agg)?;
    let message = run_message(seed);
    let ctr = 1u64;
    let online: Vec<u16> = set
        .ordered_indices()
        .into_iter()
        .filter(|i| !faults.signer_offline.contains(i))
        .collect();

    if faults.aggregator_offline {
        return Ok(run_multisig_fallback(
            backend,
            &set,
            &mut packets,
            &agg,
            &message,
            ctr,
            &online,
            faults,
            rng,
            sim,
        ));
    }

    let mut state = AggregatorState::from_secrets(&secrets, pp.aggregator_id);
    let commitment_victims = faults.tampered_commitment_victims();

    // phase 1: requests travel in parallel
    let mut requests = BTreeMap::new();
    for &index in &online {
        let slot = packets
            .iter()
            .position(|p| p.index == index)
            .expect("member");
        let req = build_multisig_request(&set, &message, ctr, index, packets[slot].mac_key());
        sim.send(
            Party::Signer(index),
            Party::Aggregator,
            Phase::CommitRequest,
            req.encode().len(),
        );
        requests.insert(index, req);
    }
    sim.end_round();

    // responses: first request creates the session, the rest hit the cache
    let mut bundles = BTreeMap::new();
    for &index in &online {
        let mut bundle = match state.serve_commitment(&requests[&index]) {
            Ok(bundle) => bundle,
            Err(e) => return Ok(finish(sim, Err(e), None)),
        };
        let mac_key = state.mac_key(index).expect("known signer").clone();
        tamper_bundle(&mut bundle, &commitment_victims, None, &mac_key);
        sim.send(
            Party::Aggregator,
            Party::Signer(index),
            Phase::CommitResponse,
            bundle.encode().len(),
        );
        bundles.insert(index, bundle);
    }
    sim.end_round();

    // phase 2: non-interactive local signing; nothing crosses the network
    let mut shares = Vec::new();
    for &index in &online {
        let slot = packets
            .iter()
            .position(|p| p.index == index)
            .expect("member");
        match local_sign(&mut packets[slot], &message, &bundles[&index], &agg, &set) {
            Ok(share) => shares.push(share),
            Err(e) => return Ok(finish(sim, Err(e), None)),
        }
    }

    // share submission to the aggregator-as-combiner, tamper rules in transit
    let share_victims = faults.tampered_share_signers();
    for share in shares.iter_mut() {
        if share_victims.contains(&share.signer) {
            share.value = share.value.add(&Scalar::one(backend));
        }
        sim.send(
            Party::Signer(share.signer),
            Party::Aggregator,
            Phase::ShareSubmit,
            share.encode().len(),
        );
    }
    sim.end_round();

    let reference_bundle = match bundles.values().next() {
        Some(bundle) => bundle.clone(),
        None => {
            return Ok(finish(
                sim,
                Err(Error::ShareSetInvalid("no online signers".into())),
                None,
            ))
        }
    };
    let signature = combine(&shares, &reference_bundle, &agg, &set, &message);
    let verified = signature.as_ref().ok().map(|sig| {
        verify(
            &message,
            sig,
            set.members(),
            Some(&agg),
            &mut VerifierState::new(),
        )
        .is_accept()
    });
    Ok(finish(sim, signature, verified))
}

/// Relay for multisig fallback: one round trip per signer, fresh random
/// nonces generated signer-side with the counter advanced at generation.
struct PacketRelay<'a> {
    sim: &'a mut Simulator,
    packets: &'a mut [SignerPacket],
    offline: &'a BTreeSet<u16>,
    rng: &'a mut ChaCha20Rng,
    nonces: BTreeMap<u16, Scalar>,
    backend: Backend,
    set_digest: [u8; 32],
}

impl CommitmentRelay for PacketRelay<'_> {
    fn fetch_commitment(
        &mut self,
        signer: u16,
        _m_digest: &[u8; 32],
        ctr: u64,
        set_encoding: &[u8],
    ) -> Result<GroupElement, Error> {
        self.sim.send(
            Party::Coordinator,
            Party::Signer(signer),
            Phase::FallbackCommitRequest,
            32 + 8 + set_encoding.len(),
        );
        if self.offline.contains(&signer) {
            self.sim.end_round();
            return Err(Error::FallbackIncomplete(signer));
        }
        let slot = self
            .packets
            .iter()
            .position(|p| p.index == signer)
            .ok_or(Error::UnknownSigner(signer))?;
        self.packets[slot].advance_counter(self.set_digest, ctr)?;
        let w = Scalar::random_nonzero(self.backend, self.rng);
        let r = GroupElement::base_exp(self.backend, &w);
        self.nonces.insert(signer, w);
        self.sim.send(
            Party::Signer(signer),
            Party::Coordinator,
            Phase::FallbackCommitResponse,
            self.backend.params().element_width,
        );
        self.sim.end_round();
        Ok(r)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_multisig_fallback(
    backend: Backend,
    set: &SignerSet,
    packets: &mut [SignerPacket],
    agg: &AggregatedKey,
    message: &[u8],
    ctr: u64,
    online: &[u16],
    faults: &FaultPlan,
    rng: &mut ChaCha20Rng,
    mut sim: Simulator,
) -> RunReport {
    // signers discover the outage and route their requests to the coordinator
    for &index in online {
        sim.send(
            Party::Signer(index),
            Party::Coordinator,
            Phase::CommitRequest,
            32 + 8 + 2,
        );
    }
    sim.end_round();

    let members = set.ordered_indices();
    let digest = msg_digest(message);
    let encoding = set.encoding();
    let (bundle_result, nonces) = {
        let mut relay = PacketRelay {
            sim: &mut sim,
            packets,
            offline: &faults.signer_offline,
            rng,
            nonces: BTreeMap::new(),
            backend,
            set_digest: set.digest(),
        };
        let result = fallback_coordinate(
            backend,
            Mode::Multisig,
            &members,
            &encoding,
            &digest,
            ctr,
            &mut relay,
        );
        (result, relay.nonces)
    };
    let bundle = match bundle_result {
        Ok(bundle) => bundle,
        Err(e) => return finish(sim, Err(e), None),
    };

    // bundle distribution and share submission, same shape as the normal path
    for &index in online {
        sim.send(
            Party::Coordinator,
            Party::Signer(index),
            Phase::CommitResponse,
            bundle.encode().len(),
        );
    }
    sim.end_round();

    let mut shares = Vec::new();
    for &index in online {
        let slot = packets
            .iter()
            .position(|p| p.index == index)
            .expect("member");
        match local_sign_with_nonce(&packets[slot], message, &bundle, agg, set, &nonces[&index]) {
            Ok(share) => {
                sim.send(
                    Party::Signer(index),
                    Party::Coordinator,
                    Phase::ShareSubmit,
                    share.encode().len(),
                );
                shares.push(share);
            }
            Err(e) => return finish(sim, Err(e), None),
        }
    }
    sim.end_round();

    let signature = combine(&shares, &bundle, agg, set, message);
    let verified = signature.as_ref().ok().map(|sig| {
        verify(
            message,
            sig,
            set.members(),
            Some(agg),
            &mut VerifierState::new(),
        )
        .is_accept()
    });
    finish(sim, signature, verified)
}

fn run_threshold(
    backend: Backend,
    n: u16,
    t: u16,
    faults: &FaultPlan,
    rng: &mut ChaCha20Rng,
    mut sim: Simulator,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    let (params, mut states, seeds) = run_dkg(t, n, backend, rng)?;
    let message = run_message(seed);
    let ctr = 1u64;
    let online: Vec<u16> = (1..=n)
        .filter(|i| !faults.signer_offline.contains(i))
        .collect();

    if faults.aggregator_offline {
        // the signing set is the online quorum; the coordinator needs every
        // member of the chosen set reachable
        let t_set: BTreeSet<u16> = online.iter().copied().collect();
        if t_set.len() < (t + 1) as usize {
            return Ok(finish(
                sim,
                Err(Error::ThresholdUnmet {
                    have: t_set.len(),
                    need: (t + 1) as usize,
                }),
                None,
            ));
        }
        return Ok(run_threshold_fallback(
            backend,
            &params,
            &mut states,
            &message,
            ctr,
            &t_set,
            rng,
            sim,
        ));
    }

    // the session targets the full party set; offline members simply never
    // show up, and the combiner compensates from its own nonce derivations
    let t_set: BTreeSet<u16> = (1..=n).collect();
    let mut state = AggregatorState::for_threshold(
        backend,
        seeds,
        Seed::random(rng),
        t,
        params.aggregator_id.clone(),
    );
    let commitment_victims = faults.tampered_commitment_victims();

    let mut requests = BTreeMap::new();
    for &index in &online {
        let mac_key = states
            .iter()
            .find(|s| s.index == index)
            .expect("member")
            .mac_key()
            .clone();
        let req = build_threshold_request(&t_set, &message, ctr, index, &mac_key);
        sim.send(
            Party::Signer(index),
            Party::Aggregator,
            Phase::CommitRequest,
            req.encode().len(),
        );
        requests.insert(index, (req, mac_key));
    }
    sim.end_round();

    let mut bundles = BTreeMap::new();
    for &index in &online {
        let (req, mac_key) = &requests[&index];
        let mut bundle = match state.serve_commitment(req) {
            Ok(bundle) => bundle,
            Err(e) => return Ok(finish(sim, Err(e), None)),
        };
        tamper_bundle(&mut bundle, &commitment_victims, Some(&t_set), mac_key);
        sim.send(
            Party::Aggregator,
            Party::Signer(index),
            Phase::CommitResponse,
            bundle.encode().len(),
        );
        bundles.insert(index, bundle);
    }
    sim.end_round();

    let mut shares = Vec::new();
    for &index in &online {
        let slot = states
            .iter()
            .position(|s| s.index == index)
            .expect("member");
        match threshold_local_sign(
            &mut states[slot],
            &message,
            &bundles[&index],
            &params,
            &t_set,
        ) {
            Ok(mut share) => {
                if faults.tampered_share_signers().contains(&index) {
                    share.value = share.value.add(&Scalar::one(backend));
                }
                sim.send(
                    Party::Signer(index),
                    Party::Aggregator,
                    Phase::ShareSubmit,
                    share.encode().len(),
                );
                shares.push(share);
            }
            Err(e) => return Ok(finish(sim, Err(e), None)),
        }
    }
    sim.end_round();

    let digest = index_set_digest(&t_set);
    let session_nonces = state.session_nonces(&digest, ctr).cloned();
    let signature = match bundles.values().next() {
        Some(bundle) => reconstruct(
            &shares,
            bundle,
            &params,
            &t_set,
            &message,
            session_nonces.as_ref(),
        ),
        None => Err(Error::ShareSetInvalid("no online signers".into())),
    };
    let verified = signature
        .as_ref()
        .ok()
        .map(|sig| verify_threshold(&message, sig, &params, &mut VerifierState::new()).is_accept());
    Ok(finish(sim, signature, verified))
}

/// Relay for threshold fallback over the parties' share states.
struct ShareRelay<'a> {
    sim: &'a mut Simulator,
    states: &'a mut [ThresholdShare],
    rng: &'a mut ChaCha20Rng,
    nonces: BTreeMap<u16, Scalar>,
    backend: Backend,
    set_digest: [u8; 32],
}

impl CommitmentRelay for ShareRelay<'_> {
    fn fetch_commitment(
        &mut self,
        signer: u16,
        _m_digest: &[u8; 32],
        ctr: u64,
        set_encoding: &[u8],
    ) -> Result<GroupElement, Error> {
        self.sim.send(
            Party::Coordinator,
            Party::Signer(signer),
            Phase::FallbackCommitRequest,
            32 + 8 + set_encoding.len(),
        );
        let slot = self
            .states
            .iter()
            .position(|s| s.index == signer)
            .ok_or(Error::FallbackIncomplete(signer))?;
        self.states[slot].advance_counter(self.set_digest, ctr)?;
        let w = Scalar::random_nonzero(self.backend, self.rng);
        let r = GroupElement::base_exp(self.backend, &w);
        self.nonces.insert(signer, w);
        self.sim.send(
            Party::Signer(signer),
            Party::Coordinator,
            Phase::FallbackCommitResponse,
            self.backend.params().element_width,
        );
        self.sim.end_round();
        Ok(r)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_threshold_fallback(
    backend: Backend,
    params: &pitpm_core::threshold::ThresholdParams,
    states: &mut [ThresholdShare],
    message: &[u8],
    ctr: u64,
    t_set: &BTreeSet<u16>,
    rng: &mut ChaCha20Rng,
    mut sim: Simulator,
) -> RunReport {
    for &index in t_set {
        sim.send(
            Party::Signer(index),
            Party::Coordinator,
            Phase::CommitRequest,
            32 + 8 + 2,
        );
    }
    sim.end_round();

    let members: Vec<u16> = t_set.iter().copied().collect();
    let digest = msg_digest(message);
    let encoding = pitpm_core::threshold::index_set_encoding(t_set);
    // only reachable members are in t_set, so the relay can reach everyone
    let mut online_states: Vec<ThresholdShare> = states
        .iter()
        .filter(|s| t_set.contains(&s.index))
        .cloned()
        .collect();
    let (bundle_result, nonces) = {
        let mut relay = ShareRelay {
            sim: &mut sim,
            states: &mut online_states,
            rng,
            nonces: BTreeMap::new(),
            backend,
            set_digest: index_set_digest(t_set),
        };
        let result = fallback_coordinate(
            backend,
            Mode::Threshold,
            &members,
            &encoding,
            &digest,
            ctr,
            &mut relay,
        );
        (result, relay.nonces)
    };
    let bundle = match bundle_result {
        Ok(bundle) => bundle,
        Err(e) => return finish(sim, Err(e), None),
    };

    for &index in t_set {
        sim.send(
            Party::Coordinator,
            Party::Signer(index),
            Phase::CommitResponse,
            bundle.encode().len(),
        );
    }
    sim.end_round();

    let mut shares = Vec::new();
    for state in &online_states {
        match threshold_local_sign_with_nonce(
            state,
            message,
            &bundle,
            params,
            t_set,
            &nonces[&state.index],
        ) {
            Ok(share) => {
                sim.send(
                    Party::Signer(state.index),
                    Party::Coordinator,
                    Phase::ShareSubmit,
                    share.encode().len(),
                );
                shares.push(share);
            }
            Err(e) => return finish(sim, Err(e), None),
        }
    }
    sim.end_round();

    // no seed-derived nonce access in fallback: all shares must be valid
    let signature = reconstruct(&shares, &bundle, params, t_set, message, None);
    let verified = signature
        .as_ref()
        .ok()
        .map(|sig| verify_threshold(message, sig, params, &mut VerifierState::new()).is_accept());
    finish(sim, signature, verified)
}

/// The traditional interactive protocol: all-to-all commitment exchange,
/// synchronized challenge, all-to-all share exchange, naive aggregation
/// with every coefficient fixed to one.
pub fn run_baseline_with_faults(
    backend: Backend,
    n: u16,
    faults: &FaultPlan,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    if n < 2 {
        return Err(HarnessError::Fault(
            "baseline needs at least two signers".into(),
        ));
    }
    faults.validate(n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sim = Simulator::new(seed, faults.latency);
    let (_, packets, _) = setup_with_rng(128, n, backend, &mut rng)?;
    let set = SignerSet::new(
        packets
            .iter()
            .map(|p| (p.index, p.public_key().clone()))
            .collect(),
    )?;
    let ones: BTreeMap<u16, Scalar> = set
        .members()
        .keys()
        .map(|i| (*i, Scalar::one(backend)))
        .collect();
    let agg = aggregate_with_coefficients(&set, &ones)?;
    let message = run_message(seed);
    let ctr = 1u64;
    let members = set.ordered_indices();

    // every participant must be reachable; an outage aborts the protocol
    if let Some(&down) = faults.signer_offline.iter().find(|i| members.contains(i)) {
        // the survivors burn their commitment broadcasts before noticing
        for &from in members
            .iter()
            .filter(|i| !faults.signer_offline.contains(i))
        {
            for &to in members.iter().filter(|&&j| j != from) {
                sim.send(
                    Party::Signer(from),
                    Party::Signer(to),
                    Phase::BaselineCommitment,
                    backend.params().element_width,
                );
            }
        }
        sim.end_round();
        return Ok(finish(
            sim,
            Err(Error::ShareSetInvalid(format!(
                "interactive baseline aborts: signer {down} offline during commitment exchange"
            ))),
            None,
        ));
    }

    // round 1: every signer broadcasts its commitment to everyone else
    let mut nonces = BTreeMap::new();
    let mut vector = Vec::new();
    for &index in &members {
        let w = Scalar::random_nonzero(backend, &mut rng);
        let r = GroupElement::base_exp(backend, &w);
        nonces.insert(index, w);
        vector.push((index, r));
        for &to in members.iter().filter(|&&j| j != index) {
            sim.send(
                Party::Signer(index),
                Party::Signer(to),
                Phase::BaselineCommitment,
                backend.params().element_width,
            );
        }
    }
    sim.end_round();

    let commitment = pitpm_core::group::product(backend, vector.iter().map(|(_, r)| r));
    let bundle = CommitmentBundle {
        commitment,
        vector,
        ctr,
        set_digest: set.digest(),
        mac: [0; 32],
    };

    // round 2: shares broadcast all-to-all; everyone can combine
    let mut shares = Vec::new();
    for &index in &members {
        let slot = packets
            .iter()
            .position(|p| p.index == index)
            .expect("member");
        let share = local_sign_with_nonce(
            &packets[slot],
            &message,
            &bundle,
            &agg,
            &set,
            &nonces[&index],
        )?;
        for &to in members.iter().filter(|&&j| j != index) {
            sim.send(
                Party::Signer(index),
                Party::Signer(to),
                Phase::BaselineShare,
                share.encode().len(),
            );
        }
        shares.push(share);
    }
    sim.end_round();

    let signature = combine(&shares, &bundle, &agg, &set, &message);
    let verified = signature.as_ref().ok().map(|sig| {
        verify(
            &message,
            sig,
            set.members(),
            Some(&agg),
            &mut VerifierState::new(),
        )
        .is_accept()
    });
    Ok(finish(sim, signature, verified))
}

/// Fault-free baseline run, as the comparison harness uses it.
pub fn run_baseline_interactive(
    backend: Backend,
    n: u16,
    seed: u64,
) -> Result<(MultiSignature, Transcript), HarnessError> {
    let report = run_baseline_with_faults(backend, n, &FaultPlan::none(), seed)?;
    let signature = report.signature.map_err(HarnessError::Protocol)?;
    Ok((signature, report.transcript))
}
