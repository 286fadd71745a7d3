//! Verifier and honest-prover behaviour, the consistency checks, and the
//! trial runner shared with the adversary scenarios.
//!
//! Geometry is collinear: V1 at 0, the claimed position at `x`, V2 at `2x`.
//! Colluders, when present, sit at `x - delta` and `x + delta`.
//!
//! Each pair `i` of the run lives in its own register (pairs never interact,
//! so the global state is the tensor product of these registers):
//!
//! | slot | qubit                                         | initial owner |
//! |------|-----------------------------------------------|---------------|
//! | 0    | V1's half of `|v1 p1>`                        | V1            |
//! | 1    | the half of `|v1 p1>` sent toward `x`         | V1            |
//! | 2    | the challenge `|+>` or `|->`                  | V1            |
//! | 3    | V2's half of `|v2 p2>`                        | V2            |
//! | 4    | the half of `|v2 p2>` sent toward `x`         | V2            |
//! | 5    | blank qubit for re-preparing the eigenstate   | prover side   |
//! | 6..  | pre-shared colluder pairs, two slots each     | colluders     |
//!
//! Random draws from the trial generator happen in this order: one `bool`
//! per pair for unfixed challenges, then one `f64` per measurement in event
//! order, interleaved with whatever draws a prover-side strategy makes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quantum::{
    self, hadamard_eigenstate, ket_zero, make_bell, pauli_frame_from, BellLabel, Bit, BsmOutcome,
    StateVector, TOLERANCE,
};
use crate::spacetime::{
    audit_log, Actor, ActorId, AuditFinding, Event, EventKind, LogEntry, LogKind, QubitHandle,
    Role, Simulation, ValueId,
};

pub const V1: ActorId = ActorId(0);
pub const P1: ActorId = ActorId(1);
pub const P: ActorId = ActorId(2);
pub const P2: ActorId = ActorId(3);
pub const V2: ActorId = ActorId(4);
/// Virtual meeting point where the verifiers pool their records.
pub const POOL: ActorId = ActorId(5);

pub mod slot {
    pub const V1_HALF: usize = 0;
    pub const P1_HALF: usize = 1;
    pub const PAYLOAD: usize = 2;
    pub const V2_HALF: usize = 3;
    pub const P2_HALF: usize = 4;
    pub const FRESH: usize = 5;
    pub const FIRST_PRESHARED: usize = 6;
}

/// Names of the classical values the verifiers exchange with the prover side.
pub mod value {
    pub const CHALLENGE: &str = "challenge";
    pub const LABEL_V1: &str = "label_v1";
    pub const LABEL_V2: &str = "label_v2";
    pub const W_PRIME: &str = "w_prime";
    pub const REPORT: &str = "report";
    pub const ANNOUNCEMENT: &str = "announcement";
    pub const V2_OUTCOME: &str = "v2_outcome";
    pub const PP_PRIME: &str = "pp_prime";
}

/// Slack applied when comparing arrival times with the deadline, absorbing
/// rounding in sums of positions.
pub const TIME_TOLERANCE: f64 = TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Challenge {
    Plus,
    Minus,
}

impl Challenge {
    pub fn bit(self) -> Bit {
        match self {
            Challenge::Plus => 0,
            Challenge::Minus => 1,
        }
    }

    pub fn from_bit(bit: Bit) -> Self {
        if bit == 0 {
            Challenge::Plus
        } else {
            Challenge::Minus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    TwoBit,
    SingleBit,
}

/// What the prover announces about its Bell measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Announcement {
    TwoBit(BsmOutcome),
    SingleBit(Bit),
}

impl Announcement {
    pub fn for_variant(pp: BsmOutcome, variant: Variant) -> Self {
        match variant {
            Variant::TwoBit => Announcement::TwoBit(pp),
            Variant::SingleBit => Announcement::SingleBit(reduce_announcement(pp)),
        }
    }

    pub fn encode(self) -> u8 {
        match self {
            Announcement::TwoBit(o) => o.index(),
            Announcement::SingleBit(b) => b,
        }
    }

    pub fn decode(raw: u8, variant: Variant) -> Result<Self> {
        match variant {
            Variant::TwoBit => BsmOutcome::from_index(raw)
                .map(Announcement::TwoBit)
                .ok_or_else(|| {
                    Error::MalformedAnnouncement(format!("{raw} is not a two-bit value"))
                }),
            Variant::SingleBit if raw <= 1 => Ok(Announcement::SingleBit(raw)),
            Variant::SingleBit => Err(Error::MalformedAnnouncement(format!(
                "{raw} is not a single bit"
            ))),
        }
    }

    /// Flips the bit that carries the sigma_z information.
    pub fn flip_phase_bit(self, flip: Bit) -> Self {
        match self {
            Announcement::TwoBit(o) => {
                Announcement::TwoBit(BsmOutcome::new(o.first() ^ flip, o.second()))
            }
            Announcement::SingleBit(b) => Announcement::SingleBit(b ^ flip),
        }
    }
}

impl fmt::Display for Announcement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Announcement::TwoBit(o) => write!(f, "{o}"),
            Announcement::SingleBit(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Announcement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Number of entangled pair sets.
    pub n: usize,
    /// Distance from each verifier to the claimed position.
    pub x: f64,
    /// Fixed challenges; drawn uniformly per pair when absent.
    pub challenge_states: Option<Vec<Challenge>>,
    /// Secret labels of the V1 channels; `00` everywhere when absent.
    pub bell_labels_v1: Option<Vec<BellLabel>>,
    pub bell_labels_v2: Option<Vec<BellLabel>>,
    pub variant: Variant,
    pub deadline_slack: f64,
    /// Extra emission delay at the honest prover.
    pub prover_latency: f64,
    /// Treat a missing announcement copy at either verifier as inconsistent.
    pub strict_duplicates: bool,
    /// When false, pooling waits for every message regardless of the deadline.
    pub enforce_timing: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n: 4,
            x: 1.0,
            challenge_states: None,
            bell_labels_v1: None,
            bell_labels_v2: None,
            variant: Variant::TwoBit,
            deadline_slack: 0.0,
            prover_latency: 0.0,
            strict_duplicates: false,
            enforce_timing: true,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if !(self.x.is_finite() && self.x > 0.0) {
            return bad(format!("x must be positive and finite, got {}", self.x));
        }
        if !(self.deadline_slack.is_finite() && self.deadline_slack >= 0.0) {
            return bad(format!(
                "deadline_slack must be >= 0, got {}",
                self.deadline_slack
            ));
        }
        if !(self.prover_latency.is_finite() && self.prover_latency >= 0.0) {
            return bad(format!(
                "prover_latency must be >= 0, got {}",
                self.prover_latency
            ));
        }
        let check_len = |name: &str, len: Option<usize>| match len {
            Some(l) if l != self.n => bad(format!("{name} has {l} entries for n = {}", self.n)),
            _ => Ok(()),
        };
        check_len(
            "challenge_states",
            self.challenge_states.as_ref().map(Vec::len),
        )?;
        check_len("bell_labels_v1", self.bell_labels_v1.as_ref().map(Vec::len))?;
        check_len("bell_labels_v2", self.bell_labels_v2.as_ref().map(Vec::len))?;
        Ok(())
    }
}

/// `2x/c + slack`.
pub fn deadline(config: &ProtocolConfig) -> f64 {
    2.0 * config.x + config.deadline_slack
}

/// The announced bit in the single-bit variant: the first bit of the Bell
/// outcome. It fixes whether the frame lies in `{I, X}` or `{Z, ZX}` once
/// combined with the secret channel label via [`phase_exponent_from_bit`].
pub fn reduce_announcement(pp_prime: BsmOutcome) -> Bit {
    pp_prime.first()
}

/// Recovers the sigma_z exponent `l` from the announced bit and the channel label.
pub fn phase_exponent_from_bit(announced: Bit, shared: BellLabel) -> Bit {
    announced ^ shared.a()
}

/// V1's check: the reported Hadamard value of `|psi'>` must equal `psi ^ k`.
pub fn verify_v1(
    psi: Challenge,
    reported_state: Bit,
    w_prime: BsmOutcome,
    shared: BellLabel,
) -> bool {
    reported_state == psi.bit() ^ pauli_frame_from(shared, w_prime).k()
}

/// V2's check: its own Hadamard outcome must equal the reported value of
/// `|psi'>` flipped by the sigma_z exponent implied by the announcement.
pub fn verify_v2(
    reported_state: Bit,
    announcement: Announcement,
    v2_measured: Bit,
    shared: BellLabel,
    variant: Variant,
) -> Result<bool> {
    let l = match (announcement, variant) {
        (Announcement::TwoBit(pp), Variant::TwoBit) => pauli_frame_from(shared, pp).k(),
        (Announcement::SingleBit(p), Variant::SingleBit) => phase_exponent_from_bit(p, shared),
        (a, v) => {
            return Err(Error::MalformedAnnouncement(format!(
                "announcement {a} does not fit the {v:?} variant"
            )))
        }
    };
    Ok(v2_measured == reported_state ^ l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    Timing,
    V1Inconsistent,
    V2Inconsistent,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Ok => "ok",
            Reason::Timing => "timing",
            Reason::V1Inconsistent => "v1_inconsistent",
            Reason::V2Inconsistent => "v2_inconsistent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: Reason,
    pub pair_pass: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stamp {
    pub time: f64,
    pub actor: &'static str,
    pub kind: &'static str,
    pub detail: String,
}

/// Everything recorded about one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTranscript {
    pub pair: usize,
    pub challenge: Challenge,
    pub label_v1: BellLabel,
    pub label_v2: BellLabel,
    /// V1's Bell outcome.
    pub w_prime: Option<BsmOutcome>,
    /// Announcement as first received by V2.
    pub pp_prime: Option<Announcement>,
    /// Hadamard value of `|psi'>` as first received by V2.
    pub prover_state_report: Option<Bit>,
    /// Hadamard value of `|psi'>` as first received by V1.
    pub v1_report: Option<Bit>,
    /// Announcement as first received by V1.
    pub v1_announcement: Option<Announcement>,
    /// V2's Hadamard outcome on its half.
    pub v2_outcome: Option<Bit>,
    pub v1_pass: bool,
    pub v2_pass: bool,
    pub on_time: bool,
    pub timestamps: Vec<Stamp>,
}

/// One transcript record per line.
pub fn transcripts_to_jsonl(transcripts: &[PairTranscript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        out.push_str(&serde_json::to_string(t).expect("transcripts always serialize"));
        out.push('\n');
    }
    out
}

/// Which actors receive the verifiers' channel halves and hold the extra qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub v1_contact: ActorId,
    pub v2_contact: ActorId,
    pub fresh_owner: ActorId,
    /// Pre-shared Bell pairs `|00>` per register, as (first holder, second holder).
    pub preshared: Vec<(ActorId, ActorId)>,
}

/// The party or parties answering the verifiers.
pub trait ProverSide {
    fn name(&self) -> &'static str;

    /// Which classical values each participant may use and when.
    fn footprint(&self) -> &'static str;

    fn layout(&self, config: &ProtocolConfig) -> Layout;

    fn start(&mut self, _trial: &mut Trial) -> Result<()> {
        Ok(())
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()>;
}

/// Mutable state of one trial: event kernel, per-pair registers and the
/// trial's random generator.
pub struct Trial {
    sim: Simulation,
    registers: Vec<StateVector>,
    rng: ChaCha8Rng,
    config: ProtocolConfig,
}

impl Trial {
    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.registers.len()
    }

    pub fn now(&self) -> f64 {
        self.sim.now()
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn register(&self, pair: usize) -> &StateVector {
        &self.registers[pair]
    }

    pub fn qubit(&self, pair: usize, slot: usize) -> QubitHandle {
        QubitHandle::new(pair, slot)
    }

    pub fn owner(&self, pair: usize, slot: usize) -> Option<ActorId> {
        self.sim.owner(QubitHandle::new(pair, slot))
    }

    pub fn read(&self, actor: ActorId, id: ValueId) -> Result<u8> {
        self.sim.read(actor, id)
    }

    pub fn learn(&mut self, actor: ActorId, id: ValueId, value: u8) {
        self.sim.learn(actor, id, value);
    }

    pub fn note(&mut self, actor: ActorId, text: impl Into<String>) {
        self.sim.note(actor, text);
    }

    pub fn timer(&mut self, actor: ActorId, at: f64, tag: &'static str) -> Result<()> {
        self.sim.schedule_timer(actor, at, tag)
    }

    pub fn send(
        &mut self,
        from: ActorId,
        to: ActorId,
        values: &[ValueId],
        qubits: &[QubitHandle],
    ) -> Result<f64> {
        self.sim.send(from, to, values, qubits)
    }

    /// Bell measurement by `actor` on two qubits it holds. The outcome is
    /// recorded in `actor`'s ledger as `record`.
    pub fn bsm(
        &mut self,
        actor: ActorId,
        pair: usize,
        q1: usize,
        q2: usize,
        record: ValueId,
    ) -> Result<BsmOutcome> {
        let handles = [QubitHandle::new(pair, q1), QubitHandle::new(pair, q2)];
        for h in handles {
            self.sim.require_owner(actor, h)?;
        }
        let outcome = quantum::bsm(&mut self.registers[pair], q1, q2, &mut self.rng)?;
        self.sim.collapse_notice(actor, &handles, record);
        self.sim.learn(actor, record, outcome.index());
        Ok(outcome)
    }

    pub fn hadamard_measure(
        &mut self,
        actor: ActorId,
        pair: usize,
        q: usize,
        record: ValueId,
    ) -> Result<Bit> {
        let h = QubitHandle::new(pair, q);
        self.sim.require_owner(actor, h)?;
        let bit = quantum::hadamard_measure(&mut self.registers[pair], q, &mut self.rng)?;
        self.sim.collapse_notice(actor, &[h], record);
        self.sim.learn(actor, record, bit);
        Ok(bit)
    }

    /// Turns a blank `|0>` qubit into `|+>` (0) or `|->` (1).
    pub fn prepare_eigenstate(
        &mut self,
        actor: ActorId,
        pair: usize,
        q: usize,
        bit: Bit,
    ) -> Result<()> {
        self.sim.require_owner(actor, QubitHandle::new(pair, q))?;
        let reg = &mut self.registers[pair];
        if (quantum::fidelity(reg, q, ket_zero())? - 1.0).abs() > TOLERANCE {
            return Err(Error::InvalidTarget(format!(
                "qubit {q} of register {pair} is not blank"
            )));
        }
        if bit == 1 {
            reg.apply_x(q)?;
        }
        reg.apply_h(q)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Copy {
    arrival: f64,
    report: Option<Bit>,
    announcement: Option<u8>,
}

#[derive(Debug, Clone, Default)]
struct Inbox {
    copies: Vec<Copy>,
}

impl Inbox {
    fn first_report(&self, cutoff: f64) -> Option<(f64, Bit)> {
        self.copies
            .iter()
            .filter(|c| c.arrival <= cutoff)
            .find_map(|c| c.report.map(|r| (c.arrival, r)))
    }

    fn first_announcement(&self, cutoff: f64) -> Option<(f64, u8)> {
        self.copies
            .iter()
            .filter(|c| c.arrival <= cutoff)
            .find_map(|c| c.announcement.map(|a| (c.arrival, a)))
    }

    fn announcements(&self, cutoff: f64) -> impl Iterator<Item = u8> + '_ {
        self.copies
            .iter()
            .filter(move |c| c.arrival <= cutoff)
            .filter_map(|c| c.announcement)
    }
}

#[derive(Debug, Clone)]
struct PoolResult {
    verdict: Verdict,
    v1_pass: Vec<bool>,
    v2_pass: Vec<bool>,
    on_time: Vec<bool>,
}

/// V1, V2 and their pooling point.
struct Verifiers {
    config: ProtocolConfig,
    layout: Layout,
    v1_inbox: Vec<Inbox>,
    v2_inbox: Vec<Inbox>,
    pooled: Option<PoolResult>,
}

impl Verifiers {
    fn new(config: ProtocolConfig, layout: Layout) -> Self {
        let n = config.n;
        Self {
            config,
            layout,
            v1_inbox: vec![Inbox::default(); n],
            v2_inbox: vec![Inbox::default(); n],
            pooled: None,
        }
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()> {
        match (&event.kind, event.actor) {
            (EventKind::Timer("start"), V1) => {
                for i in 0..trial.n() {
                    let q = trial.qubit(i, slot::P1_HALF);
                    trial.send(V1, self.layout.v1_contact, &[], &[q])?;
                }
            }
            (EventKind::Timer("start"), V2) => {
                for i in 0..trial.n() {
                    let q = trial.qubit(i, slot::P2_HALF);
                    trial.send(V2, self.layout.v2_contact, &[], &[q])?;
                }
            }
            (EventKind::Timer("teleport"), V1) => {
                for i in 0..trial.n() {
                    trial.bsm(
                        V1,
                        i,
                        slot::PAYLOAD,
                        slot::V1_HALF,
                        ValueId::new(value::W_PRIME, i),
                    )?;
                }
            }
            (EventKind::Timer("pool"), POOL) => {
                let cutoff = trial.now();
                self.pooled = Some(self.pool(trial, cutoff)?);
                trial.note(POOL, format!("pooled at t={cutoff}"));
            }
            (EventKind::Arrival(msg), actor @ (V1 | V2)) => {
                let mut by_pair: Vec<(u32, Copy)> = Vec::new();
                for &(id, v) in &msg.values {
                    let entry = match by_pair.iter_mut().find(|(p, _)| *p == id.pair) {
                        Some(e) => e,
                        None => {
                            by_pair.push((
                                id.pair,
                                Copy {
                                    arrival: msg.arrival_time,
                                    ..Copy::default()
                                },
                            ));
                            by_pair.last_mut().expect("just pushed")
                        }
                    };
                    match id.name {
                        value::REPORT => entry.1.report = Some(v),
                        value::ANNOUNCEMENT => entry.1.announcement = Some(v),
                        _ => {}
                    }
                }
                for (pair, copy) in by_pair {
                    let pair = pair as usize;
                    if pair >= trial.n() || (copy.report.is_none() && copy.announcement.is_none()) {
                        continue;
                    }
                    if actor == V1 {
                        self.v1_inbox[pair].copies.push(copy);
                    } else {
                        self.v2_inbox[pair].copies.push(copy);
                        let measured = ValueId::new(value::V2_OUTCOME, pair);
                        if copy.announcement.is_some()
                            && trial.sim().ledger().get(V2, measured).is_none()
                        {
                            trial.hadamard_measure(V2, pair, slot::V2_HALF, measured)?;
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Combines what both verifiers held at `cutoff`.
    fn pool(&self, trial: &Trial, cutoff: f64) -> Result<PoolResult> {
        let sim = trial.sim();
        let n = trial.n();
        let mut v1_pass = vec![false; n];
        let mut v2_pass = vec![false; n];
        let mut on_time = vec![false; n];
        let own = |actor: ActorId, name: &'static str, i: usize| -> Result<u8> {
            sim.value_at(actor, ValueId::new(name, i), cutoff)
                .ok_or_else(|| Error::Causality {
                    actor: sim.actor(actor).name.to_string(),
                    value: ValueId::new(name, i),
                    at: cutoff,
                    known_since: sim
                        .ledger()
                        .get(actor, ValueId::new(name, i))
                        .map(|k| k.since),
                })
        };
        for i in 0..n {
            let psi = Challenge::from_bit(own(V1, value::CHALLENGE, i)?);
            let label1 =
                BellLabel::from_index(own(V1, value::LABEL_V1, i)?).expect("stored as index");
            let label2 =
                BellLabel::from_index(own(V2, value::LABEL_V2, i)?).expect("stored as index");
            let w_prime =
                BsmOutcome::from_index(own(V1, value::W_PRIME, i)?).expect("stored as index");

            let r1 = self.v1_inbox[i].first_report(cutoff);
            let r2 = self.v2_inbox[i].first_report(cutoff);
            let a2 = self.v2_inbox[i].first_announcement(cutoff);
            let m2 = sim.value_at(V2, ValueId::new(value::V2_OUTCOME, i), cutoff);
            let (Some((_, r1)), Some((_, r2)), Some((_, a2)), Some(m2)) = (r1, r2, a2, m2) else {
                continue;
            };
            on_time[i] = true;
            v1_pass[i] = verify_v1(psi, r1, w_prime, label1);

            let v2_own = Announcement::decode(a2, self.config.variant)
                .and_then(|a| verify_v2(r2, a, m2, label2, self.config.variant))
                .unwrap_or(false);
            // The |psi'> sent to V2 must be the one V1 knows was teleported.
            let same_state = r1 == r2;
            let mut copies = self.v1_inbox[i]
                .announcements(cutoff)
                .chain(self.v2_inbox[i].announcements(cutoff));
            let agree = copies.all(|a| a == a2);
            let v1_has_copy = self.v1_inbox[i].first_announcement(cutoff).is_some();
            let duplicates_ok = agree && (!self.config.strict_duplicates || v1_has_copy);
            v2_pass[i] = v2_own && same_state && duplicates_ok;
        }
        let pair_pass: Vec<bool> = (0..n)
            .map(|i| on_time[i] && v1_pass[i] && v2_pass[i])
            .collect();
        let reason = if on_time.iter().any(|t| !t) {
            Reason::Timing
        } else if v1_pass.iter().any(|p| !p) {
            Reason::V1Inconsistent
        } else if v2_pass.iter().any(|p| !p) {
            Reason::V2Inconsistent
        } else {
            Reason::Ok
        };
        Ok(PoolResult {
            verdict: Verdict {
                accepted: reason == Reason::Ok,
                reason,
                pair_pass,
            },
            v1_pass,
            v2_pass,
            on_time,
        })
    }

    /// Time at which both verifiers first held a complete response for every pair.
    fn complete_time(&self) -> Option<f64> {
        let mut latest: f64 = 0.0;
        for i in 0..self.config.n {
            let t1 = self.v1_inbox[i].first_report(f64::INFINITY)?.0;
            let t2r = self.v2_inbox[i].first_report(f64::INFINITY)?.0;
            let t2a = self.v2_inbox[i].first_announcement(f64::INFINITY)?.0;
            latest = latest.max(t1).max(t2r).max(t2a);
        }
        Some(latest)
    }
}

/// Everything a finished trial produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub verdict: Verdict,
    pub transcripts: Vec<PairTranscript>,
    pub actors: Vec<Actor>,
    pub log: Vec<LogEntry>,
    /// When both verifiers first held complete responses for every pair.
    pub complete_response_time: Option<f64>,
    /// Per pair, whether every response received, late or not, passes both checks.
    pub content_pass: Vec<bool>,
}

impl RunReport {
    /// Latest message arrival in the log.
    pub fn final_arrival(&self) -> Option<f64> {
        self.log
            .iter()
            .filter(|e| matches!(e.kind, LogKind::Receive { .. }))
            .map(|e| e.time)
            .reduce(f64::max)
    }

    pub fn audit(&self) -> Vec<AuditFinding> {
        audit_log(&self.actors, &self.log)
    }

    pub fn export_log(&self) -> String {
        crate::spacetime::export_log(&self.actors, &self.log)
    }

    /// Time of the first `agreement` note left by a colluder.
    pub fn agreement_time(&self) -> Option<f64> {
        self.log
            .iter()
            .filter(|e| matches!(&e.kind, LogKind::Note { text } if text.starts_with("agreement")))
            .map(|e| e.time)
            .reduce(f64::min)
    }
}

fn actors_for(x: f64, delta: f64, prover_latency: f64) -> Vec<Actor> {
    vec![
        Actor::new(V1.0, "V1", Role::Verifier, 0.0),
        Actor::new(P1.0, "P1", Role::Adversary, x - delta),
        Actor::new(P.0, "P", Role::Prover, x).with_latency(prover_latency),
        Actor::new(P2.0, "P2", Role::Adversary, x + delta),
        Actor::new(V2.0, "V2", Role::Verifier, 2.0 * x),
        Actor::new(POOL.0, "pool", Role::Virtual, x),
    ]
}

/// Runs one trial with the given prover side. `delta` places the colluders.
pub fn execute(
    config: &ProtocolConfig,
    delta: f64,
    prover: &mut dyn ProverSide,
    seed: u64,
) -> Result<RunReport> {
    config.validate()?;
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenges: Vec<Challenge> = match &config.challenge_states {
        Some(c) => c.clone(),
        None => (0..n)
            .map(|_| Challenge::from_bit(rng.gen::<bool>() as Bit))
            .collect(),
    };
    let default_labels = vec![BellLabel::new(0, 0); n];
    let labels1 = config
        .bell_labels_v1
        .clone()
        .unwrap_or_else(|| default_labels.clone());
    let labels2 = config.bell_labels_v2.clone().unwrap_or(default_labels);

    let layout = prover.layout(config);
    let blank = StateVector::zero(1)?;
    let mut registers = Vec::with_capacity(n);
    for i in 0..n {
        let mut reg = make_bell(labels1[i])
            .tensor(&StateVector::from_qubit(hadamard_eigenstate(
                challenges[i].bit(),
            ))?)?
            .tensor(&make_bell(labels2[i]))?
            .tensor(&blank)?;
        for _ in &layout.preshared {
            reg = reg.tensor(&make_bell(BellLabel::new(0, 0)))?;
        }
        registers.push(reg);
    }

    let mut sim = Simulation::new(actors_for(config.x, delta, config.prover_latency));
    for i in 0..n {
        for s in [slot::V1_HALF, slot::P1_HALF, slot::PAYLOAD] {
            sim.assign_qubit(QubitHandle::new(i, s), V1);
        }
        for s in [slot::V2_HALF, slot::P2_HALF] {
            sim.assign_qubit(QubitHandle::new(i, s), V2);
        }
        sim.assign_qubit(QubitHandle::new(i, slot::FRESH), layout.fresh_owner);
        for (j, &(a, b)) in layout.preshared.iter().enumerate() {
            let base = slot::FIRST_PRESHARED + 2 * j;
            sim.assign_qubit(QubitHandle::new(i, base), a);
            sim.assign_qubit(QubitHandle::new(i, base + 1), b);
        }
        sim.learn(V1, ValueId::new(value::CHALLENGE, i), challenges[i].bit());
        sim.learn(V1, ValueId::new(value::LABEL_V1, i), labels1[i].index());
        sim.learn(V2, ValueId::new(value::LABEL_V2, i), labels2[i].index());
    }
    sim.note(
        P,
        format!("prover side: {} ({})", prover.name(), prover.footprint()),
    );
    sim.schedule_timer(V1, 0.0, "start")?;
    sim.schedule_timer(V2, 0.0, "start")?;
    sim.schedule_timer(V1, config.x, "teleport")?;
    if config.enforce_timing {
        sim.schedule_timer(POOL, deadline(config) + TIME_TOLERANCE, "pool")?;
    }

    let mut trial = Trial {
        sim,
        registers,
        rng,
        config: config.clone(),
    };
    let mut verifiers = Verifiers::new(config.clone(), layout);
    prover.start(&mut trial)?;
    while let Some(event) = trial.sim.next_event() {
        match event.actor {
            V1 | V2 | POOL => verifiers.handle(&mut trial, &event)?,
            _ => prover.handle(&mut trial, &event)?,
        }
    }
    let unbounded = verifiers.pool(&trial, f64::INFINITY)?;
    let content_pass = unbounded.verdict.pair_pass.clone();
    let pooled = verifiers.pooled.take().unwrap_or(unbounded);

    let sim = &trial.sim;
    let transcripts = (0..n)
        .map(|i| {
            let v1 = &verifiers.v1_inbox[i];
            let v2 = &verifiers.v2_inbox[i];
            let decode = |raw: u8| Announcement::decode(raw, config.variant).ok();
            PairTranscript {
                pair: i,
                challenge: challenges[i],
                label_v1: labels1[i],
                label_v2: labels2[i],
                w_prime: sim
                    .ledger()
                    .get(V1, ValueId::new(value::W_PRIME, i))
                    .and_then(|k| BsmOutcome::from_index(k.value)),
                pp_prime: v2
                    .first_announcement(f64::INFINITY)
                    .and_then(|(_, a)| decode(a)),
                prover_state_report: v2.first_report(f64::INFINITY).map(|(_, r)| r),
                v1_report: v1.first_report(f64::INFINITY).map(|(_, r)| r),
                v1_announcement: v1
                    .first_announcement(f64::INFINITY)
                    .and_then(|(_, a)| decode(a)),
                v2_outcome: sim
                    .ledger()
                    .get(V2, ValueId::new(value::V2_OUTCOME, i))
                    .map(|k| k.value),
                v1_pass: pooled.v1_pass[i],
                v2_pass: pooled.v2_pass[i],
                on_time: pooled.on_time[i],
                timestamps: stamps_for_pair(sim, i),
            }
        })
        .collect();

    Ok(RunReport {
        verdict: pooled.verdict,
        transcripts,
        complete_response_time: verifiers.complete_time(),
        content_pass,
        actors: sim.actors().to_vec(),
        log: trial.sim.into_log(),
    })
}

fn stamps_for_pair(sim: &Simulation, pair: usize) -> Vec<Stamp> {
    let p = pair as u32;
    let touches_values = |vals: &[ValueId]| vals.iter().any(|v| v.pair == p);
    let touches_qubits = |qs: &[QubitHandle]| qs.iter().any(|q| q.register == pair);
    sim.log()
        .iter()
        .filter(|e| match &e.kind {
            LogKind::Send { values, qubits, .. } | LogKind::Receive { values, qubits, .. } => {
                touches_values(values) || touches_qubits(qubits)
            }
            LogKind::Learn { value, .. } => value.pair == p,
            LogKind::Collapse { qubits, .. } => touches_qubits(qubits),
            _ => false,
        })
        .map(|e| Stamp {
            time: e.time,
            actor: sim.actor(e.actor).name,
            kind: e.kind_name(),
            detail: e.summary(sim.actors()),
        })
        .collect()
}

/// The honest prover at `x`.
#[derive(Debug, Default)]
pub struct HonestProver {
    done: Vec<bool>,
}

impl ProverSide for HonestProver {
    fn name(&self) -> &'static str {
        "honest"
    }

    fn footprint(&self) -> &'static str {
        "P uses only its own Hadamard and Bell outcomes at t = x"
    }

    fn layout(&self, config: &ProtocolConfig) -> Layout {
        let _ = config;
        Layout {
            v1_contact: P,
            v2_contact: P,
            fresh_owner: P,
            preshared: Vec::new(),
        }
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()> {
        if event.actor != P || !matches!(event.kind, EventKind::Arrival(_)) {
            return Ok(());
        }
        if self.done.len() != trial.n() {
            self.done = vec![false; trial.n()];
        }
        for i in 0..trial.n() {
            let holds_both = trial.owner(i, slot::P1_HALF) == Some(P)
                && trial.owner(i, slot::P2_HALF) == Some(P);
            if self.done[i] || !holds_both {
                continue;
            }
            self.done[i] = true;
            let report = ValueId::new(value::REPORT, i);
            let announcement = ValueId::new(value::ANNOUNCEMENT, i);
            // |psi'> is a Hadamard eigenstate up to phase, so this reads it without disturbing it.
            let s = trial.hadamard_measure(P, i, slot::P1_HALF, report)?;
            trial.prepare_eigenstate(P, i, slot::FRESH, s)?;
            let pp = trial.bsm(
                P,
                i,
                slot::FRESH,
                slot::P2_HALF,
                ValueId::new(value::PP_PRIME, i),
            )?;
            let a = Announcement::for_variant(pp, trial.config().variant);
            trial.learn(P, announcement, a.encode());
            trial.send(P, V1, &[report, announcement], &[])?;
            trial.send(P, V2, &[report, announcement], &[])?;
        }
        Ok(())
    }
}

/// Runs steps 1-4 with an honest prover.
pub fn run_honest(config: &ProtocolConfig, seed: u64) -> Result<RunReport> {
    execute(config, 0.0, &mut HonestProver::default(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(a: u8, b: u8) -> BellLabel {
        BellLabel::new(a, b)
    }

    fn o(a: u8, b: u8) -> BsmOutcome {
        BsmOutcome::new(a, b)
    }

    #[test]
    fn verify_v1_examples() {
        assert!(verify_v1(Challenge::Plus, 0, o(0, 0), b(0, 0)));
        assert!(!verify_v1(Challenge::Plus, 0, o(1, 0), b(0, 0)));
        assert!(verify_v1(Challenge::Minus, 0, o(0, 1), b(1, 0)));
    }

    #[test]
    fn verify_v2_examples() {
        let two = |pp| Announcement::TwoBit(pp);
        assert!(verify_v2(0, two(o(0, 0)), 0, b(0, 0), Variant::TwoBit).unwrap());
        assert!(!verify_v2(0, two(o(1, 1)), 0, b(0, 0), Variant::TwoBit).unwrap());
        assert!(verify_v2(
            0,
            Announcement::SingleBit(1),
            1,
            b(0, 1),
            Variant::SingleBit
        )
        .unwrap());
    }

    #[test]
    fn verify_v2_rejects_wrong_shape() {
        let r = verify_v2(0, Announcement::SingleBit(1), 1, b(0, 1), Variant::TwoBit);
        assert!(matches!(r, Err(Error::MalformedAnnouncement(_))));
        assert!(Announcement::decode(2, Variant::SingleBit).is_err());
        assert!(Announcement::decode(4, Variant::TwoBit).is_err());
    }

    #[test]
    fn reduce_announcement_examples() {
        assert_eq!(reduce_announcement(o(0, 1)), 0);
        assert_eq!(reduce_announcement(o(1, 0)), 1);
        // shared 10, pp' 00: the announced 0 decodes to k = 1, as the frame table says.
        let p = reduce_announcement(o(0, 0));
        assert_eq!(
            phase_exponent_from_bit(p, b(1, 0)),
            pauli_frame_from(b(1, 0), o(0, 0)).k()
        );
    }

    #[test]
    fn deadline_examples() {
        let mut c = ProtocolConfig {
            x: 1.0,
            ..Default::default()
        };
        assert_eq!(deadline(&c), 2.0);
        c.deadline_slack = 0.1;
        assert!((deadline(&c) - 2.1).abs() < 1e-12);
        c = ProtocolConfig {
            x: 2.5,
            ..Default::default()
        };
        assert_eq!(deadline(&c), 5.0);
    }

    #[test]
    fn config_validation() {
        let ok = ProtocolConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ProtocolConfig { n: 0, ..ok.clone() },
            ProtocolConfig {
                x: 0.0,
                ..ok.clone()
            },
            ProtocolConfig {
                x: f64::NAN,
                ..ok.clone()
            },
            ProtocolConfig {
                deadline_slack: -1.0,
                ..ok.clone()
            },
            ProtocolConfig {
                challenge_states: Some(vec![Challenge::Plus]),
                ..ok.clone()
            },
        ] {
            assert!(
                matches!(bad.validate(), Err(Error::InvalidConfig(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn honest_single_pair_accepts_at_2x() {
        let cfg = ProtocolConfig {
            n: 1,
            x: 1.0,
            challenge_states: Some(vec![Challenge::Plus]),
            ..Default::default()
        };
        for seed in 0..20 {
            let run = run_honest(&cfg, seed).unwrap();
            assert!(run.verdict.accepted, "seed {seed}: {:?}", run.verdict);
            assert_eq!(run.final_arrival(), Some(2.0));
            assert_eq!(run.complete_response_time, Some(2.0));
            assert!(run.audit().is_empty());
        }
    }

    #[test]
    fn honest_with_secret_labels_accepts() {
        let cfg = ProtocolConfig {
            n: 4,
            x: 2.0,
            bell_labels_v1: Some(BellLabel::ALL.to_vec()),
            bell_labels_v2: Some(BellLabel::ALL.iter().rev().copied().collect()),
            ..Default::default()
        };
        for variant in [Variant::TwoBit, Variant::SingleBit] {
            let cfg = ProtocolConfig {
                variant,
                ..cfg.clone()
            };
            for seed in 0..25 {
                assert!(run_honest(&cfg, seed).unwrap().verdict.accepted);
            }
        }
    }

    #[test]
    fn delayed_prover_is_rejected_on_timing() {
        let cfg = ProtocolConfig {
            n: 1,
            prover_latency: 0.1,
            ..Default::default()
        };
        let run = run_honest(&cfg, 5).unwrap();
        assert!(!run.verdict.accepted);
        assert_eq!(run.verdict.reason, Reason::Timing);
        // With enough slack the same delay is tolerated.
        let relaxed = ProtocolConfig {
            deadline_slack: 0.2,
            ..cfg
        };
        assert!(run_honest(&relaxed, 5).unwrap().verdict.accepted);
    }

    #[test]
    fn single_bit_transcripts_carry_one_bit() {
        let cfg = ProtocolConfig {
            n: 4,
            variant: Variant::SingleBit,
            ..Default::default()
        };
        let run = run_honest(&cfg, 11).unwrap();
        assert!(run.verdict.accepted);
        for t in &run.transcripts {
            assert!(matches!(t.pp_prime, Some(Announcement::SingleBit(_))));
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ProtocolConfig {
            challenge_states: Some(vec![Challenge::Minus, Challenge::Plus]),
            n: 2,
            bell_labels_v1: Some(vec![b(1, 0), b(0, 1)]),
            variant: Variant::SingleBit,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ProtocolConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<ProtocolConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
