use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qpv_core::adversary::{run_attack, AttackConfig, Strategy};
use qpv_core::analysis::{run_experiment, write_report, ExperimentSpec, ReportFormat, Scenario};
use qpv_core::oracle::{run_selftest, Implementations, Suite};
use qpv_core::protocol::{
    deadline, run_honest, transcripts_to_jsonl, PairTranscript, ProtocolConfig, RunReport, Variant,
};

/// Simulate quantum position verification with honest and colluding provers.
#[derive(Debug, Parser)]
#[command(name = "qpv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one honest trial and print its transcript.
    Run(RunArgs),
    /// Run one trial against colluding provers.
    Attack(AttackArgs),
    /// Estimate detection rates over many trials and write a report.
    Montecarlo(MonteCarloArgs),
    /// Check the simulator against brute-force linear algebra.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    TwoBit,
    SingleBit,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::TwoBit => Variant::TwoBit,
            VariantArg::SingleBit => Variant::SingleBit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Guess,
    SwapAndForward,
    BoundedRounds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Honest,
    Guess,
    SwapAndForward,
    BoundedRounds,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Honest => Scenario::Honest,
            ScenarioArg::Guess => Scenario::Guess,
            ScenarioArg::SwapAndForward => Scenario::SwapAndForward,
            ScenarioArg::BoundedRounds => Scenario::BoundedRounds,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Teleport,
    Swap,
    Frame,
    Reduction,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Teleport => Suite::Teleport,
            SuiteArg::Swap => Suite::Swap,
            SuiteArg::Frame => Suite::Frame,
            SuiteArg::Reduction => Suite::Reduction,
        }
    }
}

/// Protocol settings shared by `run` and `attack`.
#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Number of entangled pair sets [default: 4]
    #[arg(long)]
    n: Option<usize>,
    /// Distance from each verifier to the claimed position [default: 1]
    #[arg(long)]
    x: Option<f64>,
    /// Announcement variant [default: two-bit]
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Extra time allowed after 2x [default: 0]
    #[arg(long)]
    slack: Option<f64>,
    /// Count a missing announcement copy at V1 as inconsistent
    #[arg(long)]
    strict_duplicates: bool,
    /// Pool every response regardless of the deadline
    #[arg(long)]
    no_timing: bool,
    /// Seed of the trial's random generator
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print transcripts as JSON lines instead of text
    #[arg(long)]
    json: bool,
    /// Also write the event log as JSON lines to this file
    #[arg(long, value_name = "PATH")]
    log_out: Option<PathBuf>,
}

impl ProtocolArgs {
    fn apply(&self, cfg: &mut ProtocolConfig) {
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(x) = self.x {
            cfg.x = x;
        }
        if let Some(v) = self.variant {
            cfg.variant = v.into();
        }
        if let Some(s) = self.slack {
            cfg.deadline_slack = s;
        }
        if self.strict_duplicates {
            cfg.strict_duplicates = true;
        }
        if self.no_timing {
            cfg.enforce_timing = false;
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON file with protocol settings; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// JSON file with attack settings; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Colluder strategy [default: guess]
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Teleportation rounds for bounded-rounds [default: 1]
    #[arg(long)]
    rounds: Option<u32>,
    /// Distance of each colluder from the claimed position [default: 0.1]
    #[arg(long)]
    delta: Option<f64>,
    /// Cap on pre-shared colluder pairs [default: unlimited]
    #[arg(long)]
    preshared: Option<usize>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    /// JSON file with experiment settings; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Scenario to sample [default: guess]
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Comma-separated pair counts [default: 4]
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Trials per pair count [default: 10000]
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed for per-trial seeds [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Distance from each verifier to the claimed position [default: 1]
    #[arg(long)]
    x: Option<f64>,
    /// Distance of each colluder from the claimed position [default: 0.1]
    #[arg(long)]
    delta: Option<f64>,
    /// Teleportation rounds for bounded-rounds [default: 1]
    #[arg(long)]
    rounds: Option<u32>,
    /// Announcement variant [default: two-bit]
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Report format
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Report path [default: montecarlo_report.json or .csv]
    #[arg(long, short, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Worker threads [default: available processors]
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Run only this suite
    #[arg(long, value_enum)]
    suite: Option<SuiteArg>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn print_transcripts(transcripts: &[PairTranscript], json: bool) {
    if json {
        print!("{}", transcripts_to_jsonl(transcripts));
        return;
    }
    println!("pair  psi  labels  w'  report(V1/V2)  pp'(V1/V2)  V2 outcome  V1  V2");
    for t in transcripts {
        let challenge = if t.challenge.bit() == 0 { "+" } else { "-" };
        let pass = |p| if p { "ok" } else { "bad" };
        println!(
            "{:>4}  {:>3}  {}/{}   {:>2}  {:>6}/{:<6}  {:>5}/{:<5}  {:>10}  {:>2}  {:>2}",
            t.pair,
            challenge,
            t.label_v1,
            t.label_v2,
            fmt_opt(t.w_prime),
            fmt_opt(t.v1_report),
            fmt_opt(t.prover_state_report),
            fmt_opt(t.v1_announcement),
            fmt_opt(t.pp_prime),
            fmt_opt(t.v2_outcome),
            pass(t.v1_pass),
            pass(t.v2_pass),
        );
    }
}

fn print_timeline(report: &RunReport) {
    println!("timeline:");
    for e in &report.log {
        println!(
            "  t={:<8} {:<5} {:<8} {}",
            e.time,
            report.actors[e.actor.0 as usize].name,
            e.kind_name(),
            e.summary(&report.actors)
        );
    }
}

fn print_verdict(report: &RunReport) {
    let v = &report.verdict;
    if v.accepted {
        println!("verdict: ACCEPT");
    } else {
        println!("verdict: REJECT({})", v.reason);
    }
}

fn write_log(report: &RunReport, path: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, report.export_log())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<ProtocolConfig>(p)?,
        None => ProtocolConfig::default(),
    };
    args.protocol.apply(&mut cfg);
    cfg.validate()?;
    let report = run_honest(&cfg, args.protocol.seed)?;
    write_log(&report, &args.protocol.log_out)?;
    print_transcripts(&report.transcripts, args.protocol.json);
    if !args.protocol.json {
        print_timeline(&report);
        println!("deadline: t={}", deadline(&cfg));
        println!("final arrival: t={}", fmt_opt(report.final_arrival()));
        print_verdict(&report);
    }
    Ok(if report.verdict.accepted {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_attack(args: AttackArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<AttackConfig>(p)?,
        None => AttackConfig::new(Strategy::Guess, ProtocolConfig::default(), 0.1),
    };
    args.protocol.apply(&mut cfg.protocol);
    if let Some(s) = args.strategy {
        let rounds = args.rounds.unwrap_or(1);
        cfg.strategy = match s {
            StrategyArg::Guess => Strategy::Guess,
            StrategyArg::SwapAndForward => Strategy::SwapAndForward,
            StrategyArg::BoundedRounds => Strategy::BoundedRounds(rounds),
        };
    } else if let (Some(r), Strategy::BoundedRounds(_)) = (args.rounds, cfg.strategy) {
        cfg.strategy = Strategy::BoundedRounds(r);
    }
    if args.rounds.is_some() && !matches!(cfg.strategy, Strategy::BoundedRounds(_)) {
        bail!("--rounds only applies to the bounded-rounds strategy");
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if args.preshared.is_some() {
        cfg.preshared_pairs = args.preshared;
    }
    cfg.validate()?;
    let out = run_attack(&cfg, args.protocol.seed)?;
    write_log(&out.report, &args.protocol.log_out)?;
    print_transcripts(&out.report.transcripts, args.protocol.json);
    if !args.protocol.json {
        print_timeline(&out.report);
        println!("strategy: {}", out.strategy);
        println!("deadline: t={}", deadline(&cfg.protocol));
        println!(
            "earliest complete response: t={}",
            fmt_opt(out.earliest_complete_response_time)
        );
        if let Some(t) = out.agreement_time {
            println!("colluder agreement: t={t}");
        }
        print_verdict(&out.report);
        println!("reason: {}", out.verdict.reason);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_montecarlo(args: MonteCarloArgs) -> Result<ExitCode> {
    let mut spec = match &args.config {
        Some(p) => read_json::<ExperimentSpec>(p)?,
        None => ExperimentSpec::new(Scenario::Guess, vec![4], 10_000, 0),
    };
    if let Some(s) = args.scenario {
        spec.scenario = s.into();
    }
    if let Some(n) = args.n {
        spec.ns = n;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    if let Some(x) = args.x {
        spec.x = x;
    }
    if let Some(d) = args.delta {
        spec.delta = d;
    }
    if let Some(r) = args.rounds {
        spec.rounds = r;
    }
    if let Some(v) = args.variant {
        spec.variant = v.into();
    }
    spec.validate()?;
    let format: ReportFormat = args.format.into();
    let output = args.output.unwrap_or_else(|| {
        PathBuf::from(match format {
            ReportFormat::Json => "montecarlo_report.json",
            ReportFormat::Csv => "montecarlo_report.csv",
        })
    });
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("starting worker threads")?;
    let result = pool.install(|| run_experiment(&spec))?;
    write_report(&result, format, &output)
        .with_context(|| format!("writing {}", output.display()))?;
    print!("{result}");
    println!("report: {}", output.display());
    Ok(if result.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_selftest(args: SelftestArgs) -> ExitCode {
    let suites: Vec<Suite> = match args.suite {
        Some(s) => vec![s.into()],
        None => Suite::ALL.to_vec(),
    };
    let reports = run_selftest(&suites, &Implementations::default());
    for r in &reports {
        println!("{r}");
    }
    if reports.iter().all(|r| r.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Selftest(a) => Ok(cmd_selftest(a)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
