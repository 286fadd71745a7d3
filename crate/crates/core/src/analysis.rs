//! Monte Carlo estimates of acceptance and detection rates, compared with
//! `1 - 2^-n`, and JSON/CSV reports.
//!
//! Trial `i` of a point `(scenario, n)` is seeded with
//! [`trial_seed`](crate::seed::trial_seed)`(master_seed, scenario.tag(), n, i)`,
//! so results do not depend on how trials are scheduled across threads.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{run_attack, AttackConfig, Strategy};
use crate::error::{Error, Result};
use crate::protocol::{run_honest, ProtocolConfig, Variant};
use crate::seed::trial_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Honest,
    Guess,
    SwapAndForward,
    BoundedRounds,
}

impl Scenario {
    /// Tag mixed into per-trial seeds.
    pub fn tag(self, rounds: u32) -> u64 {
        match self {
            Scenario::Honest => 1,
            Scenario::Guess => 2,
            Scenario::SwapAndForward => 3,
            Scenario::BoundedRounds => 4 + ((rounds as u64) << 8),
        }
    }

    /// Detection rate the scenario should show with `n` pairs.
    pub fn expected_detection(self, n: usize) -> f64 {
        match self {
            Scenario::Honest => 0.0,
            Scenario::Guess => detection_bound(n),
            Scenario::SwapAndForward | Scenario::BoundedRounds => 1.0,
        }
    }

    pub fn label(self, rounds: u32) -> String {
        match self {
            Scenario::Honest => "honest".into(),
            Scenario::Guess => "guess".into(),
            Scenario::SwapAndForward => "swap_and_forward".into(),
            Scenario::BoundedRounds => format!("bounded_rounds({rounds})"),
        }
    }
}

/// `1 - 2^-n`.
pub fn detection_bound(n: usize) -> f64 {
    1.0 - 0.5f64.powi(n as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    #[serde(rename = "n")]
    pub ns: Vec<usize>,
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_x")]
    pub x: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub variant: Variant,
    /// Teleportation rounds for the bounded-rounds scenario.
    #[serde(default = "default_rounds")]
    pub rounds: u32,
}

fn default_x() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.1
}

fn default_rounds() -> u32 {
    1
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, ns: Vec<usize>, trials: u64, master_seed: u64) -> Self {
        Self {
            scenario,
            ns,
            trials,
            master_seed,
            x: default_x(),
            delta: default_delta(),
            variant: Variant::default(),
            rounds: default_rounds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.ns.is_empty() {
            return Err(Error::InvalidConfig("at least one n is required".into()));
        }
        for &n in &self.ns {
            self.attack_config(n).validate()?;
        }
        Ok(())
    }

    fn protocol(&self, n: usize) -> ProtocolConfig {
        ProtocolConfig {
            n,
            x: self.x,
            variant: self.variant,
            ..ProtocolConfig::default()
        }
    }

    fn attack_config(&self, n: usize) -> AttackConfig {
        let strategy = match self.scenario {
            Scenario::Honest | Scenario::Guess => Strategy::Guess,
            Scenario::SwapAndForward => Strategy::SwapAndForward,
            Scenario::BoundedRounds => Strategy::BoundedRounds(self.rounds),
        };
        AttackConfig::new(strategy, self.protocol(n), self.delta)
    }

    /// Runs one trial and reports whether the verifiers accepted.
    pub fn run_trial(&self, n: usize, index: u64) -> Result<bool> {
        let seed = trial_seed(
            self.master_seed,
            self.scenario.tag(self.rounds),
            n as u64,
            index,
        );
        let accepted = match self.scenario {
            Scenario::Honest => run_honest(&self.protocol(n), seed)?.verdict.accepted,
            _ => run_attack(&self.attack_config(n), seed)?.verdict.accepted,
        };
        Ok(accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    pub trials: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub detection_rate: f64,
    /// Binomial standard deviation at the expected rate.
    pub sigma: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub expected_detection: f64,
    pub pass: bool,
}

pub const COLUMNS: [&str; 12] = [
    "scenario",
    "n",
    "trials",
    "accepted",
    "acceptance_rate",
    "detection_rate",
    "sigma",
    "ci_low",
    "ci_high",
    "bound",
    "expected_detection",
    "pass",
];

/// Rounds to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

impl ResultRow {
    pub fn from_counts(
        scenario: String,
        n: usize,
        trials: u64,
        accepted: u64,
        expected_detection: f64,
    ) -> Self {
        let acceptance_rate = accepted as f64 / trials as f64;
        let detection_rate = 1.0 - acceptance_rate;
        let sigma = (expected_detection * (1.0 - expected_detection) / trials as f64).sqrt();
        let pass = (detection_rate - expected_detection).abs() <= 3.0 * sigma + 1e-12;
        Self {
            scenario,
            n,
            trials,
            accepted,
            acceptance_rate: round_sig(acceptance_rate),
            detection_rate: round_sig(detection_rate),
            sigma: round_sig(sigma),
            ci_low: round_sig((detection_rate - 3.0 * sigma).max(0.0)),
            ci_high: round_sig((detection_rate + 3.0 * sigma).min(1.0)),
            bound: round_sig(detection_bound(n)),
            expected_detection: round_sig(expected_detection),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Whether detection never drops by more than the combined 3-sigma noise
    /// as `n` grows, within each scenario.
    pub fn detection_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[0].scenario != w[1].scenario
                || w[1].n < w[0].n
                || w[1].detection_rate >= w[0].detection_rate - 3.0 * (w[0].sigma + w[1].sigma)
        })
    }
}

impl fmt::Display for ExperimentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>3} {:>8} {:>8} {:>10} {:>10} {:>10} {:>5}",
            "scenario", "n", "trials", "accepted", "detection", "expected", "3sigma", "pass"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<20} {:>3} {:>8} {:>8} {:>10.6} {:>10.6} {:>10.6} {:>5}",
                r.scenario,
                r.n,
                r.trials,
                r.accepted,
                r.detection_rate,
                r.expected_detection,
                3.0 * r.sigma,
                if r.pass { "yes" } else { "NO" }
            )?;
        }
        Ok(())
    }
}

/// Counts accepted trials for one `n`, in parallel on the current rayon pool.
pub fn count_accepted(spec: &ExperimentSpec, n: usize) -> Result<u64> {
    (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            spec.run_trial(n, i)
                .map(u64::from)
                .map_err(|e| Error::Trial {
                    index: i,
                    source: Box::new(e),
                })
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.ns.len());
    for &n in &spec.ns {
        let accepted = count_accepted(spec, n)?;
        rows.push(ResultRow::from_counts(
            spec.scenario.label(spec.rounds),
            n,
            spec.trials,
            accepted,
            spec.scenario.expected_detection(n),
        ));
    }
    Ok(ExperimentResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn render_report(result: &ExperimentResult, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(result)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in &result.rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<ExperimentResult> {
    match format {
        ReportFormat::Json => Ok(serde_json::from_str(text)?),
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let rows = r
                .deserialize()
                .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
            Ok(ExperimentResult { rows })
        }
    }
}

pub fn write_report(result: &ExperimentResult, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(result, format)?)?;
    Ok(())
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<ExperimentResult> {
    parse_report(&std::fs::read_to_string(path)?, format)
}
