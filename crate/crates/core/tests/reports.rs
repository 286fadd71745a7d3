use proptest::prelude::*;
use qpv_core::analysis::{
    count_accepted, detection_bound, parse_report, read_report, render_report, run_experiment,
    write_report, ExperimentResult, ExperimentSpec, ReportFormat, ResultRow, Scenario,
};
use qpv_core::oracle::{run_selftest, Implementations, Suite};
use qpv_core::quantum::{BellLabel, BsmOutcome, PauliFrame};

prop_compose! {
    fn row()(n in 1usize..20, trials in 1u64..1_000_000, frac in 0.0f64..=1.0, guess in any::<bool>()) -> ResultRow {
        let accepted = (trials as f64 * frac) as u64;
        let (name, expected) = if guess { ("guess", detection_bound(n)) } else { ("honest", 0.0) };
        ResultRow::from_counts(name.into(), n, trials, accepted, expected)
    }
}

proptest! {
    #[test]
    fn reports_round_trip(rows in prop::collection::vec(row(), 0..6)) {
        let result = ExperimentResult { rows };
        for format in [ReportFormat::Json, ReportFormat::Csv] {
            let text = render_report(&result, format).unwrap();
            prop_assert_eq!(&parse_report(&text, format).unwrap(), &result);
        }
    }

    #[test]
    fn detection_stays_in_unit_interval(r in row()) {
        prop_assert!((0.0..=1.0).contains(&r.detection_rate));
        prop_assert!(r.ci_low <= r.detection_rate && r.detection_rate <= r.ci_high);
    }
}

#[test]
fn same_counts_on_any_thread_count() {
    let spec = ExperimentSpec::new(Scenario::Guess, vec![2], 3000, 77);
    let counts: Vec<u64> = [1, 2, 4]
        .into_iter()
        .map(|t| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap();
            pool.install(|| count_accepted(&spec, 2).unwrap())
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
}

#[test]
fn guess_detection_rises_with_n() {
    let spec = ExperimentSpec::new(Scenario::Guess, vec![1, 2, 3, 4], 4000, 3);
    let result = run_experiment(&spec).unwrap();
    assert!(result.detection_monotone());
    assert!(result.all_pass(), "{result}");
}

#[test]
fn attack_scenarios_are_always_detected() {
    for scenario in [Scenario::SwapAndForward, Scenario::BoundedRounds] {
        let mut spec = ExperimentSpec::new(scenario, vec![1, 3], 100, 1);
        spec.rounds = 3;
        let result = run_experiment(&spec).unwrap();
        assert!(result.rows.iter().all(|r| r.accepted == 0 && r.pass));
    }
}

#[test]
fn reports_survive_the_file_system() {
    let dir = std::env::temp_dir().join(format!("qpv-report-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let result = run_experiment(&ExperimentSpec::new(Scenario::Honest, vec![1, 2], 20, 0)).unwrap();
    for (format, name) in [(ReportFormat::Json, "r.json"), (ReportFormat::Csv, "r.csv")] {
        let path = dir.join(name);
        write_report(&result, format, &path).unwrap();
        assert_eq!(read_report(&path, format).unwrap(), result);
    }
    assert!(write_report(&result, ReportFormat::Json, &dir.join("no/such/dir/r.json")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn broken_frame_table_fails_the_selftest() {
    fn swapped_bits(shared: BellLabel, outcome: BsmOutcome) -> PauliFrame {
        let f = qpv_core::quantum::pauli_frame_from(shared, outcome);
        PauliFrame::new(f.k_prime(), f.k())
    }
    let clean = run_selftest(&Suite::ALL, &Implementations::default());
    assert!(clean.iter().all(|r| r.passed()));
    let broken = Implementations {
        frame: swapped_bits,
        ..Implementations::default()
    };
    let reports = run_selftest(&[Suite::Frame, Suite::Teleport], &broken);
    assert!(reports.iter().all(|r| !r.passed()));
}

#[test]
fn broken_swap_rule_fails_the_selftest() {
    fn and_not_xor(a: BellLabel, b: BellLabel, o: BsmOutcome) -> BellLabel {
        BellLabel::new(a.a() & b.a() & o.first(), a.b() ^ b.b() ^ o.second())
    }
    let reports = run_selftest(
        &[Suite::Swap],
        &Implementations {
            swap: and_not_xor,
            ..Implementations::default()
        },
    );
    assert!(!reports[0].passed());
}
