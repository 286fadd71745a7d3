//! Colluding adversaries at `x - delta` (P1) and `x + delta` (P2).
//!
//! Every strategy plays through the same verifier code as the honest run and
//! can only read values that have reached it, so any attempt to use
//! information before it could arrive aborts the trial with a causality error.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    execute, slot, value, Announcement, Layout, ProtocolConfig, ProverSide, Reason, RunReport,
    Trial, Verdict, P1, P2, V1, V2,
};
use crate::quantum::{Bit, BsmOutcome, DEFAULT_MAX_QUBITS};
use crate::spacetime::{ActorId, Event, EventKind, ValueId};

/// Classical values private to the colluders.
pub mod value_names {
    pub const GUESS: &str = "guess";
    pub const SWAP_OUTCOME: &str = "swap_outcome";
    pub const RAW_STATE: &str = "raw_state";
    pub const HOP_OUTCOME: &str = "hop_outcome";
}

use value_names::*;

/// Largest number of teleportation rounds a register can hold.
pub const MAX_ROUNDS: u32 = ((DEFAULT_MAX_QUBITS - slot::FIRST_PRESHARED) / 2) as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// P2 answers alone with a guessed state value.
    Guess,
    /// P1 swaps entanglement onto a pre-shared pair and both forward corrections.
    SwapAndForward,
    /// P1 and P2 pass the state back and forth in this many teleportation rounds.
    BoundedRounds(u32),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Guess => f.write_str("guess"),
            Strategy::SwapAndForward => f.write_str("swap_and_forward"),
            Strategy::BoundedRounds(r) => write!(f, "bounded_rounds({r})"),
        }
    }
}

impl Strategy {
    /// Pre-shared pairs each register needs.
    pub fn preshared_per_pair(self) -> usize {
        match self {
            Strategy::Guess => 0,
            Strategy::SwapAndForward => 1,
            Strategy::BoundedRounds(r) => r as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub strategy: Strategy,
    /// Distance of each colluder from the claimed position.
    pub delta: f64,
    /// Total pre-shared pairs available; unlimited when absent.
    #[serde(default)]
    pub preshared_pairs: Option<usize>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

impl AttackConfig {
    pub fn new(strategy: Strategy, protocol: ProtocolConfig, delta: f64) -> Self {
        Self {
            strategy,
            delta,
            preshared_pairs: None,
            protocol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        let x = self.protocol.x;
        if !(self.delta > 0.0 && self.delta < x) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie strictly between 0 and x = {x}, got {}",
                self.delta
            )));
        }
        if let Strategy::BoundedRounds(r) = self.strategy {
            if r == 0 || r > MAX_ROUNDS {
                return Err(Error::InvalidConfig(format!(
                    "rounds must be in 1..={MAX_ROUNDS}, got {r}"
                )));
            }
        }
        let needed = self.strategy.preshared_per_pair() * self.protocol.n;
        if let Some(available) = self.preshared_pairs {
            if available < needed {
                return Err(Error::InsufficientEntanglement { needed, available });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub strategy: Strategy,
    pub verdict: Verdict,
    pub per_pair_accepted: Vec<bool>,
    /// When both verifiers first held complete responses for every pair.
    pub earliest_complete_response_time: Option<f64>,
    /// When the colluders first held each other's measurement data.
    pub agreement_time: Option<f64>,
    pub report: RunReport,
}

impl AttackOutcome {
    /// Did the answers pass the consistency checks, irrespective of timing?
    pub fn content_consistent(&self) -> bool {
        self.report.content_pass.iter().all(|&p| p)
    }

    pub fn rejected_on_timing(&self) -> bool {
        self.verdict.reason == Reason::Timing
    }
}

pub fn strategy_for(strategy: Strategy) -> Box<dyn ProverSide> {
    match strategy {
        Strategy::Guess => Box::new(Guess),
        Strategy::SwapAndForward => Box::new(SwapAndForward::default()),
        Strategy::BoundedRounds(r) => Box::new(BoundedRounds::new(r)),
    }
}

pub fn run_attack(config: &AttackConfig, seed: u64) -> Result<AttackOutcome> {
    let mut side = strategy_for(config.strategy);
    run_attack_with(config, side.as_mut(), seed)
}

/// Runs `side` in place of the named strategy, keeping its geometry and checks.
pub fn run_attack_with(
    config: &AttackConfig,
    side: &mut dyn ProverSide,
    seed: u64,
) -> Result<AttackOutcome> {
    config.validate()?;
    let report = execute(&config.protocol, config.delta, side, seed)?;
    Ok(AttackOutcome {
        strategy: config.strategy,
        per_pair_accepted: report.verdict.pair_pass.clone(),
        earliest_complete_response_time: report.complete_response_time,
        agreement_time: report.agreement_time(),
        verdict: report.verdict.clone(),
        report,
    })
}

fn arrival(event: &Event) -> Option<&crate::spacetime::Message> {
    match &event.kind {
        EventKind::Arrival(m) => Some(m),
        EventKind::Timer(_) => None,
    }
}

fn qubit_pairs(event: &Event, slot_index: usize) -> Vec<usize> {
    arrival(event)
        .map(|m| {
            m.qubits
                .iter()
                .filter(|q| q.index == slot_index)
                .map(|q| q.register)
                .collect()
        })
        .unwrap_or_default()
}

fn learn_answer(
    trial: &mut Trial,
    actor: ActorId,
    pair: usize,
    report: Bit,
    announcement: Announcement,
) -> [ValueId; 2] {
    let r = ValueId::new(value::REPORT, pair);
    let a = ValueId::new(value::ANNOUNCEMENT, pair);
    trial.learn(actor, r, report);
    trial.learn(actor, a, announcement.encode());
    [r, a]
}

fn read_outcome(trial: &Trial, actor: ActorId, id: ValueId) -> Result<BsmOutcome> {
    Ok(BsmOutcome::from_index(trial.read(actor, id)?).expect("outcomes are stored as indices"))
}

/// P2 guesses the Hadamard value of `|psi'>` and answers both verifiers from
/// `x + delta`; P1 reports its true measurement to V1.
#[derive(Debug, Default)]
pub struct Guess;

impl ProverSide for Guess {
    fn name(&self) -> &'static str {
        "guess"
    }

    fn footprint(&self) -> &'static str {
        "P2 uses its own guess and Bell outcome at x-delta; P1 uses its own Hadamard outcome at x"
    }

    fn layout(&self, _config: &ProtocolConfig) -> Layout {
        Layout {
            v1_contact: P1,
            v2_contact: P2,
            fresh_owner: P2,
            preshared: Vec::new(),
        }
    }

    fn start(&mut self, trial: &mut Trial) -> Result<()> {
        let x = trial.config().x;
        trial.timer(P1, x, "measure")
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()> {
        match (event.actor, &event.kind) {
            (P1, EventKind::Timer("measure")) => {
                for i in 0..trial.n() {
                    let report = ValueId::new(value::REPORT, i);
                    trial.hadamard_measure(P1, i, slot::P1_HALF, report)?;
                    trial.send(P1, V1, &[report], &[])?;
                }
            }
            (P2, EventKind::Arrival(_)) => {
                for i in qubit_pairs(event, slot::P2_HALF) {
                    let g = trial.rng().gen::<bool>() as Bit;
                    trial.learn(P2, ValueId::new(GUESS, i), g);
                    trial.prepare_eigenstate(P2, i, slot::FRESH, g)?;
                    let pp = trial.bsm(
                        P2,
                        i,
                        slot::FRESH,
                        slot::P2_HALF,
                        ValueId::new(value::PP_PRIME, i),
                    )?;
                    let a = Announcement::for_variant(pp, trial.config().variant);
                    let [r, a] = learn_answer(trial, P2, i, g, a);
                    trial.send(P2, V2, &[r, a], &[])?;
                    trial.send(P2, V1, &[a], &[])?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// P1 swaps V1's entanglement onto a pre-shared pair, P2 then acts as the
/// honest prover at `x`, and each side corrects the answers once it has the
/// other's outcome.
#[derive(Debug, Default)]
pub struct SwapAndForward {
    noted: bool,
}

const A1: usize = slot::FIRST_PRESHARED;
const A2: usize = slot::FIRST_PRESHARED + 1;

impl SwapAndForward {
    fn corrected(trial: &Trial, actor: ActorId, pair: usize) -> Result<(Bit, Announcement)> {
        let o = read_outcome(trial, actor, ValueId::new(SWAP_OUTCOME, pair))?;
        let raw = trial.read(actor, ValueId::new(RAW_STATE, pair))?;
        let pp = read_outcome(trial, actor, ValueId::new(value::PP_PRIME, pair))?;
        let a = Announcement::for_variant(pp, trial.config().variant).flip_phase_bit(o.first());
        Ok((raw ^ o.first(), a))
    }
}

impl ProverSide for SwapAndForward {
    fn name(&self) -> &'static str {
        "swap_and_forward"
    }

    fn footprint(&self) -> &'static str {
        "P1 uses its swap outcome at x-delta and P2's data from x+2delta; \
         P2 uses its own outcomes at x and P1's swap outcome from x+delta"
    }

    fn layout(&self, _config: &ProtocolConfig) -> Layout {
        Layout {
            v1_contact: P1,
            v2_contact: P2,
            fresh_owner: P2,
            preshared: vec![(P1, P2)],
        }
    }

    fn start(&mut self, trial: &mut Trial) -> Result<()> {
        let x = trial.config().x;
        trial.timer(P2, x, "respond")
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()> {
        match (event.actor, &event.kind) {
            (P1, EventKind::Arrival(msg)) if !msg.qubits.is_empty() => {
                for i in qubit_pairs(event, slot::P1_HALF) {
                    let o = ValueId::new(SWAP_OUTCOME, i);
                    trial.bsm(P1, i, slot::P1_HALF, A1, o)?;
                    trial.send(P1, P2, &[o], &[])?;
                }
            }
            (P2, EventKind::Timer("respond")) => {
                for i in 0..trial.n() {
                    let raw = ValueId::new(RAW_STATE, i);
                    let pp = ValueId::new(value::PP_PRIME, i);
                    let s = trial.hadamard_measure(P2, i, A2, raw)?;
                    trial.prepare_eigenstate(P2, i, slot::FRESH, s)?;
                    trial.bsm(P2, i, slot::FRESH, slot::P2_HALF, pp)?;
                    trial.send(P2, P1, &[raw, pp], &[])?;
                }
            }
            (P2, EventKind::Arrival(msg))
                if msg.values.iter().any(|(id, _)| id.name == SWAP_OUTCOME) =>
            {
                for &(id, _) in &msg.values {
                    let (r, a) = Self::corrected(trial, P2, id.pair as usize)?;
                    let vals = learn_answer(trial, P2, id.pair as usize, r, a);
                    trial.send(P2, V2, &vals, &[])?;
                }
            }
            (P1, EventKind::Arrival(msg))
                if msg.values.iter().any(|(id, _)| id.name == RAW_STATE) =>
            {
                if !self.noted {
                    self.noted = true;
                    trial.note(P1, "agreement: P1 holds P2's outcomes");
                }
                let pair = msg.values[0].0.pair as usize;
                let (r, a) = Self::corrected(trial, P1, pair)?;
                let vals = learn_answer(trial, P1, pair, r, a);
                trial.send(P1, V1, &vals, &[])?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// P1 and P2 teleport `|psi'>` back and forth `rounds` times over pre-shared
/// pairs, then exchange all outcomes and answer with the reconstructed value.
#[derive(Debug)]
pub struct BoundedRounds {
    rounds: u32,
    hop: u32,
    exchanged: [bool; 2],
}

impl BoundedRounds {
    pub fn new(rounds: u32) -> Self {
        Self {
            rounds,
            hop: 0,
            exchanged: [false; 2],
        }
    }

    /// Who performs hop `j` (1-based): P1 on odd hops, P2 on even ones.
    fn hopper(j: u32) -> ActorId {
        if j % 2 == 1 {
            P1
        } else {
            P2
        }
    }

    fn other(actor: ActorId) -> ActorId {
        if actor == P1 {
            P2
        } else {
            P1
        }
    }

    /// Slots of the pre-shared pair used by hop `j`: (sender side, receiver side).
    fn hop_slots(j: u32) -> (usize, usize) {
        let base = slot::FIRST_PRESHARED + 2 * (j as usize - 1);
        (base, base + 1)
    }

    fn holder_slot(&self) -> usize {
        if self.hop == 0 {
            slot::P1_HALF
        } else {
            Self::hop_slots(self.hop).1
        }
    }

    fn own_values(&self, actor: ActorId, pair: usize) -> Vec<ValueId> {
        let mut vals: Vec<ValueId> = (1..=self.rounds)
            .filter(|&j| Self::hopper(j) == actor)
            .map(|j| ValueId::new(HOP_OUTCOME, pair).with_slot(j as usize))
            .collect();
        if Self::hopper(self.rounds + 1) == actor {
            vals.push(ValueId::new(RAW_STATE, pair));
        }
        if actor == P2 {
            vals.push(ValueId::new(value::PP_PRIME, pair));
        }
        vals
    }

    fn answer(&self, trial: &mut Trial, actor: ActorId, pair: usize) -> Result<[ValueId; 2]> {
        let mut state = trial.read(actor, ValueId::new(RAW_STATE, pair))?;
        for j in 1..=self.rounds {
            let id = ValueId::new(HOP_OUTCOME, pair).with_slot(j as usize);
            state ^= read_outcome(trial, actor, id)?.first();
        }
        let pp = read_outcome(trial, actor, ValueId::new(value::PP_PRIME, pair))?;
        // The blank was prepared as |+>, so the announcement only needs the phase bit fixed.
        let a = Announcement::for_variant(pp, trial.config().variant).flip_phase_bit(state);
        Ok(learn_answer(trial, actor, pair, state, a))
    }
}

impl ProverSide for BoundedRounds {
    fn name(&self) -> &'static str {
        "bounded_rounds"
    }

    fn footprint(&self) -> &'static str {
        "each colluder uses its own hop and Bell outcomes from t <= x and the other's from x+2delta"
    }

    fn layout(&self, _config: &ProtocolConfig) -> Layout {
        let preshared = (1..=self.rounds)
            .map(|j| (Self::hopper(j), Self::other(Self::hopper(j))))
            .collect();
        Layout {
            v1_contact: P1,
            v2_contact: P2,
            fresh_owner: P2,
            preshared,
        }
    }

    fn start(&mut self, trial: &mut Trial) -> Result<()> {
        let x = trial.config().x;
        trial.timer(P1, x, "hop")
    }

    fn handle(&mut self, trial: &mut Trial, event: &Event) -> Result<()> {
        match (event.actor, &event.kind) {
            (P2, EventKind::Arrival(msg)) if !msg.qubits.is_empty() => {
                for i in qubit_pairs(event, slot::P2_HALF) {
                    trial.prepare_eigenstate(P2, i, slot::FRESH, 0)?;
                    trial.bsm(
                        P2,
                        i,
                        slot::FRESH,
                        slot::P2_HALF,
                        ValueId::new(value::PP_PRIME, i),
                    )?;
                }
            }
            (actor, EventKind::Timer("hop")) => {
                let source = self.holder_slot();
                self.hop += 1;
                let j = self.hop;
                let (sender_side, _) = Self::hop_slots(j);
                for i in 0..trial.n() {
                    let id = ValueId::new(HOP_OUTCOME, i).with_slot(j as usize);
                    trial.bsm(actor, i, source, sender_side, id)?;
                }
                let now = trial.now();
                if j < self.rounds {
                    trial.timer(Self::other(actor), now, "hop")?;
                } else {
                    trial.timer(Self::other(actor), now, "measure")?;
                }
            }
            (actor, EventKind::Timer("measure")) => {
                let q = self.holder_slot();
                for i in 0..trial.n() {
                    trial.hadamard_measure(actor, i, q, ValueId::new(RAW_STATE, i))?;
                }
                let now = trial.now();
                trial.timer(P1, now, "share")?;
                trial.timer(P2, now, "share")?;
            }
            (actor, EventKind::Timer("share")) => {
                for i in 0..trial.n() {
                    let vals = self.own_values(actor, i);
                    trial.send(actor, Self::other(actor), &vals, &[])?;
                }
            }
            (actor @ (P1 | P2), EventKind::Arrival(msg)) if !msg.values.is_empty() => {
                let side = usize::from(actor == P2);
                if !self.exchanged[side] {
                    self.exchanged[side] = true;
                    trial.note(
                        actor,
                        format!(
                            "agreement: {} holds all outcomes",
                            trial.sim().actor(actor).name
                        ),
                    );
                }
                let pair = msg.values[0].0.pair as usize;
                let vals = self.answer(trial, actor, pair)?;
                let verifier = if actor == P1 { V1 } else { V2 };
                trial.send(actor, verifier, &vals, &[])?;
            }
            _ => {}
        }
        Ok(())
    }
}
