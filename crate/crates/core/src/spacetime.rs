//! One-dimensional event timeline with light-speed message transit.
//!
//! Units put `c = 1`, so a message between actors at positions `p1` and `p2`
//! spends exactly `|p1 - p2|` in flight. Events are processed in
//! `(time, actor id, sequence)` order.
//!
//! Every actor has a knowledge ledger recording when each classical value
//! first became available to it. Values enter a ledger either locally (a
//! measurement at that actor) or by message arrival; [`Simulation::read`]
//! refuses to hand an actor anything its ledger does not yet hold. Quantum
//! collapse is global and instantaneous but never writes to a remote ledger.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ActorId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Verifier,
    Prover,
    Adversary,
    /// Bookkeeping participant such as the verifiers' pooling point.
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorldPoint {
    pub position: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Actor {
    pub id: ActorId,
    pub name: &'static str,
    pub role: Role,
    pub position: f64,
    /// Delay between deciding to send and the actual emission.
    pub latency: f64,
}

impl Actor {
    pub fn new(id: u32, name: &'static str, role: Role, position: f64) -> Self {
        Self {
            id: ActorId(id),
            name,
            role,
            position,
            latency: 0.0,
        }
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = latency;
        self
    }

    pub fn at(&self, time: f64) -> WorldPoint {
        WorldPoint {
            position: self.position,
            time,
        }
    }
}

/// Distance over `c`, with `c = 1`.
pub fn light_travel_time(p1: f64, p2: f64) -> f64 {
    (p1 - p2).abs()
}

/// Name of a classical value, scoped to one pair of the protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId {
    pub name: &'static str,
    pub pair: u32,
    pub slot: u32,
}

impl ValueId {
    pub fn new(name: &'static str, pair: usize) -> Self {
        Self {
            name,
            pair: pair as u32,
            slot: 0,
        }
    }

    pub fn with_slot(mut self, slot: usize) -> Self {
        self.slot = slot as u32;
        self
    }
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.slot == 0 {
            write!(f, "{}[{}]", self.name, self.pair)
        } else {
            write!(f, "{}[{}].{}", self.name, self.pair, self.slot)
        }
    }
}

impl Serialize for ValueId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A qubit addressed by register and position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitHandle {
    pub register: usize,
    pub index: usize,
}

impl QubitHandle {
    pub fn new(register: usize, index: usize) -> Self {
        Self { register, index }
    }
}

impl fmt::Display for QubitHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}.{}", self.register, self.index)
    }
}

impl Serialize for QubitHandle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: ActorId,
    pub receiver: ActorId,
    pub emit_time: f64,
    pub arrival_time: f64,
    pub values: Vec<(ValueId, u8)>,
    pub qubits: Vec<QubitHandle>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Timer(&'static str),
    Arrival(Message),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub actor: ActorId,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, ActorId, u64) {
        (self.time, self.actor, self.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest key first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (t1, a1, s1) = self.key();
        let (t2, a2, s2) = other.key();
        t2.total_cmp(&t1).then(a2.cmp(&a1)).then(s2.cmp(&s1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Known {
    pub value: u8,
    pub since: f64,
}

/// Per-actor record of which classical values are knowable from when.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeLedger {
    entries: BTreeMap<(ActorId, ValueId), Known>,
}

impl KnowledgeLedger {
    /// Records `id` at `actor`; keeps the earlier entry if one exists.
    /// Returns true when the value is new to that actor.
    pub fn learn(&mut self, actor: ActorId, id: ValueId, value: u8, time: f64) -> bool {
        match self.entries.get(&(actor, id)) {
            Some(k) if k.since <= time => false,
            _ => {
                self.entries
                    .insert((actor, id), Known { value, since: time });
                true
            }
        }
    }

    pub fn get(&self, actor: ActorId, id: ValueId) -> Option<Known> {
        self.entries.get(&(actor, id)).copied()
    }

    pub fn known_at(&self, actor: ActorId, id: ValueId, time: f64) -> Option<u8> {
        self.get(actor, id)
            .filter(|k| k.since <= time)
            .map(|k| k.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogKind {
    Timer {
        tag: &'static str,
    },
    Send {
        to: ActorId,
        emit: f64,
        arrival: f64,
        values: Vec<ValueId>,
        qubits: Vec<QubitHandle>,
    },
    Receive {
        from: ActorId,
        emit: f64,
        values: Vec<ValueId>,
        qubits: Vec<QubitHandle>,
    },
    Learn {
        value: ValueId,
        bits: u8,
    },
    /// A measurement collapsed the global state; only the site learns the outcome.
    Collapse {
        qubits: Vec<QubitHandle>,
        outcome: ValueId,
    },
    Note {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub actor: ActorId,
    pub kind: LogKind,
}

#[derive(Serialize)]
struct LogLine<'a> {
    time: f64,
    actor: &'a str,
    kind: &'static str,
    summary: String,
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl LogEntry {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LogKind::Timer { .. } => "timer",
            LogKind::Send { .. } => "send",
            LogKind::Receive { .. } => "receive",
            LogKind::Learn { .. } => "learn",
            LogKind::Collapse { .. } => "collapse",
            LogKind::Note { .. } => "note",
        }
    }

    pub fn summary(&self, actors: &[Actor]) -> String {
        let name = |id: ActorId| actors.get(id.0 as usize).map_or("?", |a| a.name);
        match &self.kind {
            LogKind::Timer { tag } => (*tag).to_string(),
            LogKind::Send {
                to,
                arrival,
                values,
                qubits,
                ..
            } => format!(
                "to={} arrival={} values=[{}] qubits=[{}]",
                name(*to),
                arrival,
                join(values),
                join(qubits)
            ),
            LogKind::Receive {
                from,
                emit,
                values,
                qubits,
            } => format!(
                "from={} emitted={} values=[{}] qubits=[{}]",
                name(*from),
                emit,
                join(values),
                join(qubits)
            ),
            LogKind::Learn { value, bits } => format!("{value}={bits}"),
            LogKind::Collapse { qubits, outcome } => {
                format!("qubits=[{}] outcome={outcome}", join(qubits))
            }
            LogKind::Note { text } => text.clone(),
        }
    }

    /// One JSON object with `time`, `actor`, `kind` and `summary`.
    pub fn to_line(&self, actors: &[Actor]) -> String {
        let line = LogLine {
            time: self.time,
            actor: actors.get(self.actor.0 as usize).map_or("?", |a| a.name),
            kind: self.kind_name(),
            summary: self.summary(actors),
        };
        serde_json::to_string(&line).expect("log lines always serialize")
    }
}

/// Writes the log as line-delimited JSON.
pub fn export_log(actors: &[Actor], log: &[LogEntry]) -> String {
    let mut out = String::new();
    for entry in log {
        out.push_str(&entry.to_line(actors));
        out.push('\n');
    }
    out
}

/// The discrete-event kernel for one trial.
#[derive(Debug)]
pub struct Simulation {
    actors: Vec<Actor>,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Event>,
    ledger: KnowledgeLedger,
    owners: BTreeMap<QubitHandle, Option<ActorId>>,
    log: Vec<LogEntry>,
}

impl Simulation {
    /// `actors[i].id` must equal `i`.
    pub fn new(actors: Vec<Actor>) -> Self {
        for (i, a) in actors.iter().enumerate() {
            assert_eq!(a.id.0 as usize, i, "actor ids must be dense and ordered");
        }
        Self {
            actors,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            ledger: KnowledgeLedger::default(),
            owners: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    pub fn actor(&self, id: ActorId) -> &Actor {
        &self.actors[id.0 as usize]
    }

    pub fn ledger(&self) -> &KnowledgeLedger {
        &self.ledger
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<LogEntry> {
        self.log
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    fn push(&mut self, time: f64, actor: ActorId, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event {
            time,
            actor,
            seq,
            kind,
        });
    }

    fn record(&mut self, actor: ActorId, kind: LogKind) {
        self.log.push(LogEntry {
            time: self.now,
            actor,
            kind,
        });
    }

    pub fn schedule_timer(&mut self, actor: ActorId, time: f64, tag: &'static str) -> Result<()> {
        if time < self.now {
            return Err(Error::PastEvent {
                requested: time,
                now: self.now,
            });
        }
        self.push(time, actor, EventKind::Timer(tag));
        Ok(())
    }

    /// Places a qubit in `actor`'s hands without a transit (initial preparation).
    pub fn assign_qubit(&mut self, qubit: QubitHandle, actor: ActorId) {
        self.owners.insert(qubit, Some(actor));
    }

    pub fn owner(&self, qubit: QubitHandle) -> Option<ActorId> {
        self.owners.get(&qubit).copied().flatten()
    }

    pub fn require_owner(&self, actor: ActorId, qubit: QubitHandle) -> Result<()> {
        if self.owner(qubit) == Some(actor) {
            Ok(())
        } else {
            Err(Error::NotOwner {
                actor: self.actor(actor).name.to_string(),
                register: qubit.register,
                qubit: qubit.index,
            })
        }
    }

    /// Adds a locally produced value to `actor`'s ledger at the current time.
    pub fn learn(&mut self, actor: ActorId, id: ValueId, value: u8) {
        if self.ledger.learn(actor, id, value, self.now) {
            self.record(
                actor,
                LogKind::Learn {
                    value: id,
                    bits: value,
                },
            );
        }
    }

    /// Reads a classical value at the current time, failing if it has not
    /// reached `actor` yet.
    pub fn read(&self, actor: ActorId, id: ValueId) -> Result<u8> {
        self.read_at(actor, id, self.now)
    }

    fn read_at(&self, actor: ActorId, id: ValueId, time: f64) -> Result<u8> {
        match self.ledger.get(actor, id) {
            Some(k) if k.since <= time => Ok(k.value),
            other => Err(Error::Causality {
                actor: self.actor(actor).name.to_string(),
                value: id,
                at: time,
                known_since: other.map(|k| k.since),
            }),
        }
    }

    /// Value of `id` at `actor` as of `time`, if it had arrived by then.
    pub fn value_at(&self, actor: ActorId, id: ValueId, time: f64) -> Option<u8> {
        self.ledger.known_at(actor, id, time)
    }

    /// Emits a message after the sender's latency. Every carried value must be
    /// in the sender's ledger by the emission time and every qubit in its hands.
    pub fn send(
        &mut self,
        sender: ActorId,
        receiver: ActorId,
        values: &[ValueId],
        qubits: &[QubitHandle],
    ) -> Result<f64> {
        let emit_time = self.now + self.actor(sender).latency;
        let carried = values
            .iter()
            .map(|&id| self.read_at(sender, id, emit_time).map(|v| (id, v)))
            .collect::<Result<Vec<_>>>()?;
        for &q in qubits {
            self.require_owner(sender, q)?;
        }
        for &q in qubits {
            self.owners.insert(q, None);
        }
        let arrival_time = emit_time
            + light_travel_time(self.actor(sender).position, self.actor(receiver).position);
        self.record(
            sender,
            LogKind::Send {
                to: receiver,
                emit: emit_time,
                arrival: arrival_time,
                values: values.to_vec(),
                qubits: qubits.to_vec(),
            },
        );
        let msg = Message {
            sender,
            receiver,
            emit_time,
            arrival_time,
            values: carried,
            qubits: qubits.to_vec(),
        };
        self.push(arrival_time, receiver, EventKind::Arrival(msg));
        Ok(arrival_time)
    }

    /// Logs a measurement at `site`. The outcome itself enters only the
    /// site's ledger, via the accompanying `learn`.
    pub fn collapse_notice(&mut self, site: ActorId, qubits: &[QubitHandle], outcome: ValueId) {
        self.record(
            site,
            LogKind::Collapse {
                qubits: qubits.to_vec(),
                outcome,
            },
        );
    }

    pub fn note(&mut self, actor: ActorId, text: impl Into<String>) {
        self.record(actor, LogKind::Note { text: text.into() });
    }

    /// Pops the next event, advancing the clock. Arrivals hand their values
    /// and qubits to the receiver before the event is returned.
    pub fn next_event(&mut self) -> Option<Event> {
        let event = self.queue.pop()?;
        self.now = event.time;
        match &event.kind {
            EventKind::Timer(tag) => self.record(event.actor, LogKind::Timer { tag }),
            EventKind::Arrival(msg) => {
                for &(id, v) in &msg.values {
                    self.ledger.learn(msg.receiver, id, v, msg.arrival_time);
                }
                for &q in &msg.qubits {
                    self.owners.insert(q, Some(msg.receiver));
                }
                self.record(
                    msg.receiver,
                    LogKind::Receive {
                        from: msg.sender,
                        emit: msg.emit_time,
                        values: msg.values.iter().map(|(id, _)| *id).collect(),
                        qubits: msg.qubits.clone(),
                    },
                );
            }
        }
        Some(event)
    }

    /// Drains the queue, handing each event to `handler`.
    pub fn run_until_quiescent(
        &mut self,
        mut handler: impl FnMut(&mut Simulation, &Event) -> Result<()>,
    ) -> Result<()> {
        while let Some(event) = self.next_event() {
            handler(self, &event)?;
        }
        Ok(())
    }
}

/// A problem found by [`audit_log`].
#[derive(Debug, Clone, PartialEq)]
pub enum AuditFinding {
    /// A message carried a value its sender did not hold at emission.
    Superluminal {
        sender: ActorId,
        value: ValueId,
        emit: f64,
        known_since: Option<f64>,
    },
    /// Arrival time differs from emission plus distance.
    TransitMismatch {
        sender: ActorId,
        to: ActorId,
        emit: f64,
        arrival: f64,
    },
    /// Log entries went backwards in time.
    TimeReversal { index: usize },
}

/// Re-derives every ledger from the log alone and checks each emission
/// against it, along with transit exactness and monotone time.
pub fn audit_log(actors: &[Actor], log: &[LogEntry]) -> Vec<AuditFinding> {
    let mut learned: BTreeMap<(ActorId, ValueId), f64> = BTreeMap::new();
    let mut note = |actor: ActorId, id: ValueId, t: f64| {
        let slot = learned.entry((actor, id)).or_insert(t);
        *slot = slot.min(t);
    };
    for entry in log {
        match &entry.kind {
            LogKind::Learn { value, .. } => note(entry.actor, *value, entry.time),
            LogKind::Receive { values, .. } => {
                for v in values {
                    note(entry.actor, *v, entry.time);
                }
            }
            _ => {}
        }
    }

    let mut findings = Vec::new();
    for (i, entry) in log.iter().enumerate() {
        if i > 0 && entry.time < log[i - 1].time {
            findings.push(AuditFinding::TimeReversal { index: i });
        }
        if let LogKind::Send {
            to,
            emit,
            arrival,
            values,
            ..
        } = &entry.kind
        {
            let pos = |id: ActorId| actors[id.0 as usize].position;
            if *arrival != *emit + light_travel_time(pos(entry.actor), pos(*to)) {
                findings.push(AuditFinding::TransitMismatch {
                    sender: entry.actor,
                    to: *to,
                    emit: *emit,
                    arrival: *arrival,
                });
            }
            for v in values {
                let since = learned.get(&(entry.actor, *v)).copied();
                if since.is_none_or(|t| t > *emit) {
                    findings.push(AuditFinding::Superluminal {
                        sender: entry.actor,
                        value: *v,
                        emit: *emit,
                        known_since: since,
                    });
                }
            }
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Vec<Actor> {
        vec![
            Actor::new(0, "A", Role::Verifier, 0.0),
            Actor::new(1, "B", Role::Prover, 1.0),
            Actor::new(2, "C", Role::Verifier, 2.0),
        ]
    }

    #[test]
    fn light_travel_examples() {
        assert_eq!(light_travel_time(0.0, 0.0), 0.0);
        assert_eq!(light_travel_time(0.0, 3.5), 3.5);
        let (x, d) = (1.0, 0.25);
        assert_eq!(light_travel_time(x - d, x + d), 2.0 * d);
    }

    #[test]
    fn empty_schedule_gives_empty_log() {
        let mut sim = Simulation::new(line());
        sim.run_until_quiescent(|_, _| Ok(())).unwrap();
        assert!(sim.log().is_empty());
    }

    #[test]
    fn equal_times_break_ties_by_actor_id() {
        let mut sim = Simulation::new(line());
        sim.schedule_timer(ActorId(2), 1.0, "late-id").unwrap();
        sim.schedule_timer(ActorId(0), 1.0, "early-id").unwrap();
        sim.schedule_timer(ActorId(1), 0.5, "first").unwrap();
        let mut order = Vec::new();
        sim.run_until_quiescent(|_, ev| {
            if let EventKind::Timer(tag) = ev.kind {
                order.push(tag);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(order, ["first", "early-id", "late-id"]);
    }

    #[test]
    fn same_actor_same_time_keeps_insertion_order() {
        let mut sim = Simulation::new(line());
        for tag in ["a", "b", "c"] {
            sim.schedule_timer(ActorId(1), 2.0, tag).unwrap();
        }
        let mut order = Vec::new();
        sim.run_until_quiescent(|_, ev| {
            if let EventKind::Timer(tag) = ev.kind {
                order.push(tag);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn message_arrives_after_distance_and_updates_ledger() {
        let mut sim = Simulation::new(line());
        let id = ValueId::new("bit", 0);
        sim.learn(ActorId(0), id, 1);
        let arrival = sim.send(ActorId(0), ActorId(2), &[id], &[]).unwrap();
        assert_eq!(arrival, 2.0);
        assert!(sim.value_at(ActorId(2), id, 1.999).is_none());
        let ev = sim.next_event().unwrap();
        assert_eq!(ev.time, 2.0);
        assert_eq!(sim.read(ActorId(2), id).unwrap(), 1);
        assert!(audit_log(sim.actors(), sim.log()).is_empty());
    }

    #[test]
    fn reading_unknown_value_is_a_causality_violation() {
        let mut sim = Simulation::new(line());
        let id = ValueId::new("secret", 0);
        sim.learn(ActorId(0), id, 1);
        let err = sim.read(ActorId(1), id).unwrap_err();
        assert!(err.is_causality_violation());
        let err = sim.send(ActorId(1), ActorId(2), &[id], &[]).unwrap_err();
        assert!(err.is_causality_violation());
    }

    #[test]
    fn qubits_in_flight_belong_to_nobody() {
        let mut sim = Simulation::new(line());
        let q = QubitHandle::new(0, 1);
        sim.assign_qubit(q, ActorId(0));
        sim.send(ActorId(0), ActorId(1), &[], &[q]).unwrap();
        assert_eq!(sim.owner(q), None);
        assert!(sim.require_owner(ActorId(0), q).is_err());
        assert!(sim.send(ActorId(0), ActorId(2), &[], &[q]).is_err());
        sim.next_event().unwrap();
        assert_eq!(sim.owner(q), Some(ActorId(1)));
    }

    #[test]
    fn latency_delays_emission() {
        let actors = vec![
            Actor::new(0, "A", Role::Prover, 0.0).with_latency(0.5),
            Actor::new(1, "B", Role::Verifier, 1.0),
        ];
        let mut sim = Simulation::new(actors);
        assert_eq!(sim.send(ActorId(0), ActorId(1), &[], &[]).unwrap(), 1.5);
    }

    #[test]
    fn audit_flags_forged_send() {
        let actors = line();
        let forged = vec![LogEntry {
            time: 0.0,
            actor: ActorId(1),
            kind: LogKind::Send {
                to: ActorId(2),
                emit: 0.0,
                arrival: 1.0,
                values: vec![ValueId::new("w", 0)],
                qubits: vec![],
            },
        }];
        let findings = audit_log(&actors, &forged);
        assert!(matches!(findings[0], AuditFinding::Superluminal { .. }));

        let bad_transit = vec![LogEntry {
            time: 0.0,
            actor: ActorId(0),
            kind: LogKind::Send {
                to: ActorId(2),
                emit: 0.0,
                arrival: 1.5,
                values: vec![],
                qubits: vec![],
            },
        }];
        assert!(matches!(
            audit_log(&actors, &bad_transit)[0],
            AuditFinding::TransitMismatch { .. }
        ));
    }

    #[test]
    fn past_timers_are_rejected() {
        let mut sim = Simulation::new(line());
        sim.schedule_timer(ActorId(0), 1.0, "t").unwrap();
        sim.next_event();
        assert!(matches!(
            sim.schedule_timer(ActorId(0), 0.5, "t"),
            Err(Error::PastEvent { .. })
        ));
    }

    #[test]
    fn log_lines_are_json() {
        let mut sim = Simulation::new(line());
        sim.learn(ActorId(0), ValueId::new("v", 3), 1);
        let text = export_log(sim.actors(), sim.log());
        let parsed: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(parsed["actor"], "A");
        assert_eq!(parsed["kind"], "learn");
        assert_eq!(parsed["summary"], "v[3]=1");
    }
}
