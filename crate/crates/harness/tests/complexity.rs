//! Message-complexity claims measured from real transcripts: exact linear
//! scaling for the aggregator protocol, exact quadratic cost for the
//! interactive baseline, and simulator determinism.

use pitpm_core::group::Backend;
use pitpm_harness::{run_baseline_interactive, run_pitpm, FaultPlan, LatencyModel, Phase, Scheme};

#[test]
fn pitpm_messages_exactly_3n_for_1_through_50() {
    for n in 1..=50u16 {
        let backend = if n <= 10 {
            Backend::Test
        } else {
            Backend::Prod
        };
        let report = run_pitpm(backend, n, Scheme::Multisig, &FaultPlan::none(), n as u64).unwrap();
        assert!(report.succeeded(), "n={n}");
        let t = &report.transcript;
        assert_eq!(t.total_messages(), 3 * n as usize, "n={n}");
        assert_eq!(t.count_phase(Phase::CommitRequest), n as usize);
        assert_eq!(t.count_phase(Phase::CommitResponse), n as usize);
        assert_eq!(t.count_phase(Phase::ShareSubmit), n as usize);
    }
}

#[test]
fn baseline_messages_exactly_2n_n_minus_1() {
    for n in [2u16, 3, 5, 8, 10] {
        let (sig, transcript) = run_baseline_interactive(Backend::Test, n, n as u64).unwrap();
        let expected = 2 * n as usize * (n as usize - 1);
        assert_eq!(transcript.total_messages(), expected, "n={n}");
        assert_eq!(
            transcript.count_phase(Phase::BaselineCommitment),
            expected / 2
        );
        assert_eq!(transcript.count_phase(Phase::BaselineShare), expected / 2);
        assert!(!sig.signers.is_empty());
    }
    // the quadratic blowup in one concrete number: 10 signers, 90 commitment messages
    let (_, transcript) = run_baseline_interactive(Backend::Test, 10, 99).unwrap();
    assert_eq!(transcript.count_phase(Phase::BaselineCommitment), 90);
}

#[test]
fn simulator_determinism_transcripts_and_signatures() {
    let run = |seed: u64| {
        let report =
            run_pitpm(Backend::Test, 5, Scheme::Multisig, &FaultPlan::none(), seed).unwrap();
        (
            report.transcript.render(),
            report.signature.unwrap().encode(),
        )
    };
    let (transcript_a, sig_a) = run(1234);
    let (transcript_b, sig_b) = run(1234);
    assert_eq!(
        transcript_a, transcript_b,
        "transcripts must match byte for byte"
    );
    assert_eq!(sig_a, sig_b, "signatures must match byte for byte");
    let (transcript_c, _) = run(1235);
    assert_ne!(transcript_a, transcript_c);
}

#[test]
fn latency_model_changes_wall_time_only() {
    let run = |latency: LatencyModel| {
        let faults = FaultPlan {
            latency,
            ..FaultPlan::none()
        };
        run_pitpm(Backend::Test, 4, Scheme::Multisig, &faults, 77).unwrap()
    };
    let fast = run(LatencyModel {
        fixed_ms: 0,
        jitter_ms: 0,
    });
    let slow = run(LatencyModel {
        fixed_ms: 50,
        jitter_ms: 10,
    });
    assert_eq!(
        fast.transcript.total_messages(),
        slow.transcript.total_messages()
    );
    assert_eq!(fast.transcript.total_bytes(), slow.transcript.total_bytes());
    assert_eq!(
        fast.signature.unwrap().encode(),
        slow.signature.unwrap().encode(),
        "latency must not perturb protocol bytes"
    );
    assert_eq!(fast.wall_ms, 0);
    assert!(slow.wall_ms >= 150, "three rounds of at least 50ms each");
}

#[test]
fn fallback_doubles_phase_one_and_still_verifies() {
    let faults = FaultPlan {
        aggregator_offline: true,
        ..FaultPlan::none()
    };
    let n = 3u16;
    let report = run_pitpm(Backend::Test, n, Scheme::Multisig, &faults, 42).unwrap();
    assert!(
        report.succeeded(),
        "fallback must produce a verifying signature"
    );
    let t = &report.transcript;
    // normal phase 1 is 2n messages; the relayed commitment round adds 2n more
    let phase1 = t.count_phase(Phase::CommitRequest)
        + t.count_phase(Phase::CommitResponse)
        + t.count_phase(Phase::FallbackCommitRequest)
        + t.count_phase(Phase::FallbackCommitResponse);
    assert_eq!(phase1, 4 * n as usize);
    assert_eq!(t.total_messages(), 5 * n as usize);

    // same wire format as the aggregator path
    let normal = run_pitpm(Backend::Test, n, Scheme::Multisig, &FaultPlan::none(), 42).unwrap();
    assert_eq!(
        report.signature.unwrap().encode().len(),
        normal.signature.unwrap().encode().len()
    );
}

#[test]
fn fallback_with_unreachable_signer_reports_incomplete() {
    let faults = FaultPlan {
        aggregator_offline: true,
        signer_offline: [2u16].into_iter().collect(),
        ..FaultPlan::none()
    };
    let report = run_pitpm(Backend::Test, 3, Scheme::Multisig, &faults, 42).unwrap();
    assert_eq!(
        report.signature.unwrap_err(),
        pitpm_core::Error::FallbackIncomplete(2)
    );
}

#[test]
fn threshold_offline_signer_tolerated_where_baseline_aborts() {
    let faults = FaultPlan {
        signer_offline: [4u16].into_iter().collect(),
        ..FaultPlan::none()
    };
    // threshold (2,5): four online members still clear t+1 = 3
    let report = run_pitpm(Backend::Test, 5, Scheme::Threshold { t: 2 }, &faults, 9).unwrap();
    assert!(report.succeeded(), "threshold run must tolerate the outage");

    // the same outage kills the interactive baseline outright
    let baseline = pitpm_harness::run_baseline_with_faults(Backend::Test, 5, &faults, 9).unwrap();
    assert!(baseline.signature.is_err());
}

#[test]
fn threshold_tampered_shares_filtered_by_robustness() {
    let faults = FaultPlan {
        tamper: vec![
            pitpm_harness::TamperRule::ShareValue { signer: 1 },
            pitpm_harness::TamperRule::ShareValue { signer: 3 },
        ],
        ..FaultPlan::none()
    };
    let report = run_pitpm(Backend::Test, 5, Scheme::Threshold { t: 2 }, &faults, 11).unwrap();
    assert!(
        report.succeeded(),
        "robust reconstruction must survive t tampered shares"
    );
}

#[test]
fn tampered_commitment_detected_by_the_victim() {
    let faults = FaultPlan {
        tamper: vec![pitpm_harness::TamperRule::CommitmentEntry { victim: 2 }],
        ..FaultPlan::none()
    };
    let report = run_pitpm(Backend::Test, 3, Scheme::Multisig, &faults, 5).unwrap();
    assert_eq!(
        report.signature.unwrap_err(),
        pitpm_core::Error::AggregatorTampering { signer: 2 }
    );

    let report = run_pitpm(Backend::Test, 5, Scheme::Threshold { t: 1 }, &faults, 5).unwrap();
    assert_eq!(
        report.signature.unwrap_err(),
        pitpm_core::Error::AggregatorTampering { signer: 2 }
    );
}

#[test]
fn multisig_offline_signer_aborts_combination() {
    let faults = FaultPlan {
        signer_offline: [1u16].into_iter().collect(),
        ..FaultPlan::none()
    };
    let report = run_pitpm(Backend::Test, 3, Scheme::Multisig, &faults, 8).unwrap();
    assert!(matches!(
        report.signature,
        Err(pitpm_core::Error::ShareSetInvalid(_))
    ));
}

#[test]
fn threshold_fallback_round_trip() {
    let faults = FaultPlan {
        aggregator_offline: true,
        ..FaultPlan::none()
    };
    let report = run_pitpm(Backend::Test, 4, Scheme::Threshold { t: 1 }, &faults, 21).unwrap();
    assert!(report.succeeded(), "threshold fallback must verify");
}
