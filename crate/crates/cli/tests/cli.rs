use std::process::{Command, Output};

fn qpv(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn honest_run_accepts_at_two_x() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(&["run", "--n", "1", "--x", "1", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("verdict: ACCEPT"));
    assert!(out.contains("final arrival: t=2\n"));
}

#[test]
fn zero_pairs_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(&["run", "--n", "0"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("n must be at least 1"));
}

#[test]
fn single_bit_run_announces_one_bit_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &["run", "--variant", "single-bit", "--n", "4", "--json"],
        dir.path(),
    );
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for l in lines {
        assert_eq!(l["pp_prime"].as_str().unwrap().len(), 1);
        assert_eq!(l["v2_pass"], true);
    }
}

#[test]
fn run_writes_the_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(&["run", "--n", "2", "--log-out", "log.jsonl"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["time"].is_number() && v["kind"].is_string());
    }
}

#[test]
fn run_reads_a_config_file_and_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("ok.json"),
        r#"{"n": 2, "x": 3.5, "bell_labels_v1": ["10", "11"]}"#,
    )
    .unwrap();
    let o = qpv(&["run", "--config", "ok.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final arrival: t=7\n"));
    std::fs::write(dir.path().join("bad.json"), r#"{"n": 2, "speed": 3}"#).unwrap();
    let o = qpv(&["run", "--config", "bad.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown field"));
}

#[test]
fn swap_attack_is_late() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &[
            "attack",
            "--strategy",
            "swap-and-forward",
            "--x",
            "1",
            "--delta",
            "0.25",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("verdict: REJECT(timing)"));
    assert!(out.contains("earliest complete response: t=2.25"));
}

#[test]
fn guess_attack_completes_either_way() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &["attack", "--strategy", "guess", "--n", "1", "--seed", "3"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("verdict: "));
}

#[test]
fn bounded_rounds_report_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &[
            "attack",
            "--strategy",
            "bounded-rounds",
            "--rounds",
            "2",
            "--delta",
            "0.25",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("colluder agreement: t=1.5"));
    assert!(out.contains("REJECT(timing)"));
}

#[test]
fn invalid_attack_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &[
            "attack",
            "--strategy",
            "guess",
            "--delta",
            "1.5",
            "--x",
            "1",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("delta"));
    let o = qpv(&["attack", "--strategy", "teleport-everything"], dir.path());
    assert!(!o.status.success());
    let o = qpv(&["attack", "--turbo"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--turbo"));
    let o = qpv(
        &[
            "attack",
            "--strategy",
            "swap-and-forward",
            "--n",
            "3",
            "--preshared",
            "2",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("pre-shared"));
}

#[test]
fn honest_montecarlo_detects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &[
            "montecarlo",
            "--scenario",
            "honest",
            "--n",
            "1,4",
            "--trials",
            "200",
            "--format",
            "csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("montecarlo_report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[3], "200");
        assert_eq!(cols[5], "0.0");
    }
}

#[test]
fn montecarlo_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, threads: &'static str| {
        vec![
            "montecarlo",
            "--scenario",
            "guess",
            "--n",
            "1,2",
            "--trials",
            "500",
            "--seed",
            "42",
            "-o",
            out,
            "--threads",
            threads,
        ]
    };
    assert!(qpv(&args("a.json", "1"), dir.path())
        .status
        .code()
        .is_some());
    assert!(qpv(&args("b.json", "1"), dir.path())
        .status
        .code()
        .is_some());
    assert!(qpv(&args("c.json", "3"), dir.path())
        .status
        .code()
        .is_some());
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.json"), read("c.json"));
    let v: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn montecarlo_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"scenario": "swap_and_forward", "n": [1, 2], "trials": 20, "delta": 0.2}"#,
    )
    .unwrap();
    let o = qpv(
        &["montecarlo", "--config", "spec.json", "-o", "r.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("swap_and_forward"));
}

#[test]
fn montecarlo_surfaces_write_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(
        &[
            "montecarlo",
            "--scenario",
            "honest",
            "--trials",
            "5",
            "-o",
            "missing/dir/r.json",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing/dir/r.json"));
}

#[test]
fn selftest_passes_and_filters() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpv(&["selftest"], dir.path());
    assert!(o.status.success());
    let out = stdout(&o);
    for suite in ["teleport", "swap", "frame", "reduction"] {
        assert!(
            out.lines()
                .any(|l| l.starts_with("PASS") && l.contains(suite)),
            "{out}"
        );
    }
    let o = qpv(&["selftest", "--suite", "swap"], dir.path());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("64 cases"));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--n", "3", "--seed", "11"][..],
        &["attack", "--strategy", "guess", "--seed", "5"][..],
    ] {
        assert_eq!(
            stdout(&qpv(args, dir.path())),
            stdout(&qpv(args, dir.path()))
        );
    }
}

#[test]
fn help_documents_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&qpv(&["montecarlo", "--help"], dir.path()));
    for flag in [
        "--scenario",
        "--n",
        "--trials",
        "--seed",
        "--format",
        "--output",
        "--threads",
        "--config",
    ] {
        assert!(out.contains(flag), "{flag} missing");
    }
}
