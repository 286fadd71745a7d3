use proptest::prelude::*;
use qpv_core::protocol::{
    deadline, run_honest, transcripts_to_jsonl, verify_v1, verify_v2, Announcement, Challenge,
    ProtocolConfig, Reason, Variant, POOL, V1, V2,
};
use qpv_core::quantum::{pauli_frame_from, BellLabel, BsmOutcome};
use qpv_core::spacetime::LogKind;

fn label() -> impl Strategy<Value = BellLabel> {
    (0u8..4).prop_map(|i| BellLabel::from_index(i).unwrap())
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::TwoBit), Just(Variant::SingleBit)]
}

prop_compose! {
    fn honest_config()(n in 1usize..6, x in 0.1f64..10.0, variant in variant())
        (challenges in prop::collection::vec(any::<bool>(), n),
         l1 in prop::collection::vec(label(), n),
         l2 in prop::collection::vec(label(), n),
         n in Just(n), x in Just(x), variant in Just(variant)) -> ProtocolConfig {
        ProtocolConfig {
            n,
            x,
            variant,
            challenge_states: Some(challenges.into_iter().map(|c| Challenge::from_bit(c as u8)).collect()),
            bell_labels_v1: Some(l1),
            bell_labels_v2: Some(l2),
            ..Default::default()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn honest_runs_always_accept(cfg in honest_config(), seed in any::<u64>()) {
        let run = run_honest(&cfg, seed).unwrap();
        prop_assert!(run.verdict.accepted, "{:?}", run.verdict);
        prop_assert_eq!(run.complete_response_time, Some(2.0 * cfg.x));
        prop_assert!(run.audit().is_empty());
    }

    #[test]
    fn single_and_two_bit_checks_agree(shared in label(), pp in 0u8..4, report in 0u8..2, measured in 0u8..2) {
        let pp = BsmOutcome::from_index(pp).unwrap();
        let two = verify_v2(report, Announcement::TwoBit(pp), measured, shared, Variant::TwoBit).unwrap();
        let one = verify_v2(
            report,
            Announcement::for_variant(pp, Variant::SingleBit),
            measured,
            shared,
            Variant::SingleBit,
        ).unwrap();
        prop_assert_eq!(two, one);
    }

    #[test]
    fn v1_check_accepts_exactly_the_teleported_value(psi in 0u8..2, shared in label(), w in 0u8..4, report in 0u8..2) {
        let w = BsmOutcome::from_index(w).unwrap();
        let expected = psi ^ pauli_frame_from(shared, w).k();
        prop_assert_eq!(verify_v1(Challenge::from_bit(psi), report, w, shared), report == expected);
    }

    #[test]
    fn deadline_grows_with_x_and_slack(x in 0.01f64..100.0, slack in 0.0f64..5.0) {
        let cfg = ProtocolConfig { x, deadline_slack: slack, ..Default::default() };
        prop_assert!(deadline(&cfg) >= 2.0 * x);
        prop_assert!((deadline(&cfg) - (2.0 * x + slack)).abs() <= 1e-12);
    }
}

#[test]
fn sixteen_pairs_at_3_5_accept_for_100_seeds() {
    let cfg = ProtocolConfig {
        n: 16,
        x: 3.5,
        ..Default::default()
    };
    for seed in 0..100 {
        assert!(run_honest(&cfg, seed).unwrap().verdict.accepted);
    }
}

#[test]
fn pooling_happens_after_all_verifier_activity() {
    let run = run_honest(&ProtocolConfig::default(), 4).unwrap();
    let pool_time = run
        .log
        .iter()
        .find(|e| e.actor == POOL)
        .map(|e| e.time)
        .unwrap();
    assert!(pool_time >= 2.0);
    let last_verifier = run
        .log
        .iter()
        .filter(|e| e.actor == V1 || e.actor == V2)
        .map(|e| e.time)
        .fold(0.0, f64::max);
    assert!(last_verifier <= pool_time);
}

#[test]
fn honest_timeline_follows_the_geometry() {
    let run = run_honest(
        &ProtocolConfig {
            n: 1,
            x: 2.0,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    let receives: Vec<(f64, &str)> = run
        .log
        .iter()
        .filter(|e| matches!(e.kind, LogKind::Receive { .. }))
        .map(|e| (e.time, run.actors[e.actor.0 as usize].name))
        .collect();
    assert_eq!(
        receives,
        vec![(2.0, "P"), (2.0, "P"), (4.0, "V1"), (4.0, "V2")]
    );
    let t = &run.transcripts[0];
    assert!(t.v1_pass && t.v2_pass && t.on_time);
    assert_eq!(t.prover_state_report, t.v1_report);
    assert_eq!(t.pp_prime, t.v1_announcement);
}

#[test]
fn transcripts_are_json_lines() {
    let run = run_honest(
        &ProtocolConfig {
            n: 3,
            ..Default::default()
        },
        8,
    )
    .unwrap();
    let text = transcripts_to_jsonl(&run.transcripts);
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["pair"], i);
        assert!(l["w_prime"].as_str().unwrap().len() == 2);
        assert!(!l["timestamps"].as_array().unwrap().is_empty());
    }
}

#[test]
fn slow_prover_is_a_timing_failure_even_with_right_answers() {
    let cfg = ProtocolConfig {
        n: 2,
        prover_latency: 0.5,
        ..Default::default()
    };
    let run = run_honest(&cfg, 2).unwrap();
    assert_eq!(run.verdict.reason, Reason::Timing);
    let diagnostic = ProtocolConfig {
        enforce_timing: false,
        ..cfg
    };
    assert!(run_honest(&diagnostic, 2).unwrap().verdict.accepted);
}
