use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::message::{Message, Mode, MsgType};
use super::topic::{matches, validate_pattern, validate_topic};
use super::BusError;

/// Connection handle assigned by the transport, in accept order.
pub type ConnId = u64;

/// Sender name the broker uses for its own messages.
pub const BROKER_NAME: &str = "broker";

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub steps: u64,
    pub step_seconds: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { steps: 1440, step_seconds: 60.0 }
    }
}

/// Expected clients and schedule of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub schedule: Schedule,
    pub clients: Vec<(String, Mode)>,
    /// Reject clients not listed and any registration after start.
    pub strict: bool,
    /// Abort when a stepped client reports a non-`ok` quality.
    pub abort_on_fault: bool,
}

impl Manifest {
    pub fn new(schedule: Schedule) -> Self {
        Self { schedule, clients: Vec::new(), strict: true, abort_on_fault: false }
    }

    pub fn client(mut self, name: &str, mode: Mode) -> Self {
        self.clients.push((name.to_string(), mode));
        self
    }

    fn expected(&self, name: &str) -> Option<Mode> {
        self.clients.iter().find(|(n, _)| n == name).map(|&(_, m)| m)
    }
}

/// Input to the broker state machine. The sequence of inputs is the session
/// transcript: replaying it into a fresh broker reproduces the event log.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Line { conn: ConnId, line: String },
    Disconnect { conn: ConnId },
    /// Start, broadcast the next step, or shut down, whichever is due.
    Advance,
    /// Supervisor abort.
    Abort { reason: String },
}

impl Input {
    pub fn to_transcript_line(&self) -> String {
        match self {
            Input::Line { conn, line } => format!("L {conn} {line}"),
            Input::Disconnect { conn } => format!("D {conn}"),
            Input::Advance => "A".to_string(),
            Input::Abort { reason } => format!("X {}", reason.replace('\n', " ")),
        }
    }

    pub fn from_transcript_line(text: &str) -> Result<Self, BusError> {
        let bad = || BusError::Transcript(text.to_string());
        let (kind, rest) = text.split_once(' ').unwrap_or((text, ""));
        match kind {
            "A" if rest.is_empty() => Ok(Input::Advance),
            "X" => Ok(Input::Abort { reason: rest.to_string() }),
            "D" => Ok(Input::Disconnect { conn: rest.parse().map_err(|_| bad())? }),
            "L" => {
                let (conn, line) = rest.split_once(' ').ok_or_else(bad)?;
                Ok(Input::Line { conn: conn.parse().map_err(|_| bad())?, line: line.to_string() })
            }
            _ => Err(bad()),
        }
    }
}

pub fn parse_transcript(text: &str) -> Result<Vec<Input>, BusError> {
    text.lines().filter(|l| !l.is_empty()).map(Input::from_transcript_line).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub conn: ConnId,
    pub msg: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Register { conn: ConnId, name: String, mode: Mode },
    Reject { conn: ConnId, reason: String },
    Subscribe { name: String, patterns: Vec<String> },
    Route { from: String, seq: u64, topic: String, step: Option<u64>, to: Vec<String> },
    Step { step: u64, pending: Vec<String> },
    StepDone { from: String, step: u64, quality: Option<String> },
    Stale { from: String, step: Option<u64> },
    ClientError { from: String, msg: String },
    Disconnect { name: String },
    Shutdown,
    Abort { reason: String },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Register { conn, name, mode } => write!(f, "REGISTER {name} conn={conn} mode={mode}"),
            Event::Reject { conn, reason } => write!(f, "REJECT conn={conn} {reason}"),
            Event::Subscribe { name, patterns } => write!(f, "SUBSCRIBE {name} {}", patterns.join(",")),
            Event::Route { from, seq, topic, step, to } => {
                write!(f, "ROUTE {from}#{seq} {topic}")?;
                if let Some(s) = step {
                    write!(f, " step={s}")?;
                }
                write!(f, " -> {}", to.join(","))
            }
            Event::Step { step, pending } => write!(f, "STEP {step} pending={}", pending.join(",")),
            Event::StepDone { from, step, quality } => {
                write!(f, "STEP_DONE {from} {step}")?;
                if let Some(q) = quality {
                    write!(f, " quality={q}")?;
                }
                Ok(())
            }
            Event::Stale { from, step } => match step {
                Some(s) => write!(f, "STALE {from} {s}"),
                None => write!(f, "STALE {from} -"),
            },
            Event::ClientError { from, msg } => write!(f, "CLIENT_ERROR {from} {msg}"),
            Event::Disconnect { name } => write!(f, "DISCONNECT {name}"),
            Event::Shutdown => f.write_str("SHUTDOWN"),
            Event::Abort { reason } => write!(f, "ABORT {reason}"),
        }
    }
}

/// Barrier state of the synchronization host.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    /// Last broadcast step; 0 before start.
    pub step: u64,
    pub stepped: Vec<String>,
    pub pending: BTreeSet<String>,
    pub free_running: Vec<String>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phase {
    Waiting,
    Running,
    Finished,
    Aborted(String),
}

#[derive(Debug, Clone)]
struct Session {
    name: String,
    mode: Mode,
    conn: ConnId,
    subs: Vec<String>,
    last_seq: u64,
    connected: bool,
}

/// Transport-free broker and synchronization host. Every input is handled
/// to completion and returns the messages to deliver, in order.
#[derive(Debug, Clone)]
pub struct Broker {
    manifest: Manifest,
    sessions: Vec<Session>,
    by_conn: HashMap<ConnId, usize>,
    sync: SyncState,
    phase: Phase,
    seq: u64,
    events: Vec<Event>,
    transcript: Vec<Input>,
}

impl Broker {
    pub fn new(manifest: Manifest) -> Self {
        let sync = SyncState {
            step: 0,
            stepped: Vec::new(),
            pending: BTreeSet::new(),
            free_running: Vec::new(),
            schedule: manifest.schedule,
        };
        Self {
            manifest,
            sessions: Vec::new(),
            by_conn: HashMap::new(),
            sync,
            phase: Phase::Waiting,
            seq: 0,
            events: Vec::new(),
            transcript: Vec::new(),
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn sync_state(&self) -> &SyncState {
        &self.sync
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Finished | Phase::Aborted(_))
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Event log, one numbered line per event.
    pub fn log_text(&self) -> String {
        self.events.iter().enumerate().map(|(i, e)| format!("{i} {e}\n")).collect()
    }

    pub fn transcript(&self) -> &[Input] {
        &self.transcript
    }

    pub fn transcript_text(&self) -> String {
        self.transcript.iter().map(|i| i.to_transcript_line() + "\n").collect()
    }

    /// Client name bound to a connection.
    pub fn name_of(&self, conn: ConnId) -> Option<&str> {
        self.by_conn.get(&conn).map(|&i| self.sessions[i].name.as_str())
    }

    /// The step `Advance` would broadcast next (`steps + 1` means shutdown),
    /// or `None` while the barrier is still open.
    pub fn ready_step(&self) -> Option<u64> {
        match self.phase {
            Phase::Waiting => {
                let all_present = self.manifest.clients.iter().all(|(name, _)| {
                    self.sessions.iter().any(|s| &s.name == name && s.connected)
                });
                all_present.then_some(1)
            }
            Phase::Running if self.sync.pending.is_empty() => Some(self.sync.step + 1),
            _ => None,
        }
    }

    pub fn apply(&mut self, input: Input) -> Vec<Delivery> {
        self.transcript.push(input.clone());
        let mut out = Vec::new();
        match input {
            Input::Line { conn, line } => self.on_line(conn, &line, &mut out),
            Input::Disconnect { conn } => self.on_disconnect(conn, &mut out),
            Input::Advance => self.on_advance(&mut out),
            Input::Abort { reason } => {
                if !self.is_done() {
                    self.abort(reason, &mut out);
                }
            }
        }
        out
    }

    pub fn handle_line(&mut self, conn: ConnId, line: &str) -> Vec<Delivery> {
        self.apply(Input::Line { conn, line: line.to_string() })
    }

    pub fn disconnect(&mut self, conn: ConnId) -> Vec<Delivery> {
        self.apply(Input::Disconnect { conn })
    }

    pub fn advance(&mut self) -> Vec<Delivery> {
        self.apply(Input::Advance)
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn reject(&mut self, conn: ConnId, reason: String, out: &mut Vec<Delivery>) {
        let seq = self.next_seq();
        out.push(Delivery { conn, msg: Message::error(BROKER_NAME, seq, reason.clone()) });
        self.events.push(Event::Reject { conn, reason });
    }

    fn on_line(&mut self, conn: ConnId, line: &str, out: &mut Vec<Delivery>) {
        let msg = match Message::from_line(line) {
            Ok(m) => m,
            Err(e) => return self.reject(conn, format!("malformed message: {e}"), out),
        };
        let Some(&idx) = self.by_conn.get(&conn) else {
            if msg.t == MsgType::Register {
                self.on_register(conn, msg, out);
            } else {
                self.reject(conn, "not registered".into(), out);
            }
            return;
        };
        if msg.from != self.sessions[idx].name {
            return self.reject(conn, format!("sender {} does not match session {}", msg.from, self.sessions[idx].name), out);
        }
        if msg.seq <= self.sessions[idx].last_seq {
            let reason = format!("seq {} not above {}", msg.seq, self.sessions[idx].last_seq);
            return self.reject(conn, reason, out);
        }
        self.sessions[idx].last_seq = msg.seq;
        match msg.t {
            MsgType::Register => self.reject(conn, "already registered".into(), out),
            MsgType::Subscribe => {
                let patterns = msg.subs.unwrap_or_default();
                if let Some(p) = patterns.iter().find(|p| validate_pattern(p).is_err()) {
                    return self.reject(conn, format!("malformed topic {p:?}"), out);
                }
                self.sessions[idx].subs.extend(patterns.iter().cloned());
                self.events.push(Event::Subscribe { name: msg.from, patterns });
            }
            MsgType::Publish => self.on_publish(conn, idx, msg, out),
            MsgType::StepDone => self.on_step_done(idx, msg, out),
            MsgType::Error => {
                let text = msg.msg.unwrap_or_default();
                self.events.push(Event::ClientError { from: msg.from, msg: text });
            }
            MsgType::RegisterAck | MsgType::Step | MsgType::Shutdown => {
                self.reject(conn, format!("unexpected {:?} from client", msg.t), out)
            }
        }
    }

    fn on_register(&mut self, conn: ConnId, msg: Message, out: &mut Vec<Delivery>) {
        let name = msg.from.clone();
        let Some(mode) = msg.mode else {
            return self.reject(conn, format!("{name}: registration without mode"), out);
        };
        if name.is_empty() || name == BROKER_NAME {
            return self.reject(conn, format!("reserved client name {name:?}"), out);
        }
        if self.sessions.iter().any(|s| s.name == name) {
            return self.reject(conn, format!("duplicate client {name}"), out);
        }
        match self.manifest.expected(&name) {
            Some(expected) if expected != mode => {
                return self.reject(conn, format!("{name}: mode {mode} differs from manifest ({expected})"), out);
            }
            None if self.manifest.strict => {
                return self.reject(conn, format!("unknown client {name}"), out);
            }
            _ => {}
        }
        match self.phase {
            Phase::Waiting => {}
            Phase::Running if !self.manifest.strict && mode == Mode::FreeRunning => {}
            Phase::Running => return self.reject(conn, format!("{name}: experiment already started"), out),
            Phase::Finished | Phase::Aborted(_) => {
                return self.reject(conn, format!("{name}: experiment is over"), out);
            }
        }
        let subs = msg.subs.clone().unwrap_or_default();
        if let Some(p) = subs.iter().find(|p| validate_pattern(p).is_err()) {
            return self.reject(conn, format!("malformed topic {p:?}"), out);
        }
        self.by_conn.insert(conn, self.sessions.len());
        self.sessions.push(Session { name: name.clone(), mode, conn, subs, last_seq: msg.seq, connected: true });
        match mode {
            Mode::Stepped => self.sync.stepped.push(name.clone()),
            Mode::FreeRunning => self.sync.free_running.push(name.clone()),
        }
        self.events.push(Event::Register { conn, name, mode });
        let seq = self.next_seq();
        let ack = Message {
            mode: Some(mode),
            steps: Some(self.sync.schedule.steps),
            step_seconds: Some(self.sync.schedule.step_seconds),
            ..Message::new(MsgType::RegisterAck, BROKER_NAME, seq)
        };
        out.push(Delivery { conn, msg: ack });
    }

    fn on_publish(&mut self, conn: ConnId, idx: usize, msg: Message, out: &mut Vec<Delivery>) {
        let Some(topic) = msg.topic.clone() else {
            return self.reject(conn, "PUBLISH without topic".into(), out);
        };
        if validate_topic(&topic).is_err() {
            return self.reject(conn, format!("malformed topic {topic:?}"), out);
        }
        if msg.val.is_none() {
            return self.reject(conn, format!("PUBLISH on {topic} without val"), out);
        }
        let mut to = Vec::new();
        for (j, s) in self.sessions.iter().enumerate() {
            if j != idx && s.connected && s.subs.iter().any(|p| matches(p, &topic)) {
                to.push(s.name.clone());
                out.push(Delivery { conn: s.conn, msg: msg.clone() });
            }
        }
        self.events.push(Event::Route { from: msg.from, seq: msg.seq, topic, step: msg.step, to });
    }

    fn on_step_done(&mut self, idx: usize, msg: Message, out: &mut Vec<Delivery>) {
        let name = msg.from.clone();
        let current = self.phase == Phase::Running
            && self.sessions[idx].mode == Mode::Stepped
            && msg.step == Some(self.sync.step)
            && self.sync.pending.contains(&name);
        if !current {
            log::debug!("stale STEP_DONE from {name} for {:?}", msg.step);
            self.events.push(Event::Stale { from: name, step: msg.step });
            return;
        }
        self.sync.pending.remove(&name);
        let step = self.sync.step;
        self.events.push(Event::StepDone { from: name.clone(), step, quality: msg.quality.clone() });
        if let Some(q) = msg.quality.filter(|q| q != "ok") {
            if self.manifest.abort_on_fault {
                let detail = msg.msg.unwrap_or_default();
                self.abort(format!("{name} reported {q} at step {step}: {detail}"), out);
            }
        }
    }

    fn on_disconnect(&mut self, conn: ConnId, out: &mut Vec<Delivery>) {
        let Some(&idx) = self.by_conn.get(&conn) else { return };
        if !self.sessions[idx].connected {
            return;
        }
        self.sessions[idx].connected = false;
        let name = self.sessions[idx].name.clone();
        self.events.push(Event::Disconnect { name: name.clone() });
        let live = matches!(self.phase, Phase::Waiting | Phase::Running);
        if live && self.sessions[idx].mode == Mode::Stepped {
            self.abort(format!("stepped client {name} disconnected"), out);
        }
    }

    fn on_advance(&mut self, out: &mut Vec<Delivery>) {
        let Some(next) = self.ready_step() else { return };
        if next > self.sync.schedule.steps {
            self.phase = Phase::Finished;
            self.events.push(Event::Shutdown);
            self.broadcast_shutdown(None, out);
            return;
        }
        self.phase = Phase::Running;
        self.sync.step = next;
        let stepped: Vec<usize> =
            (0..self.sessions.len()).filter(|&i| self.sessions[i].connected && self.sessions[i].mode == Mode::Stepped).collect();
        self.sync.pending = stepped.iter().map(|&i| self.sessions[i].name.clone()).collect();
        for i in stepped {
            let seq = self.next_seq();
            out.push(Delivery { conn: self.sessions[i].conn, msg: Message::step(BROKER_NAME, seq, next) });
        }
        self.events.push(Event::Step { step: next, pending: self.sync.pending.iter().cloned().collect() });
    }

    fn abort(&mut self, reason: String, out: &mut Vec<Delivery>) {
        log::error!("experiment aborted: {reason}");
        self.phase = Phase::Aborted(reason.clone());
        self.events.push(Event::Abort { reason: reason.clone() });
        self.broadcast_shutdown(Some(reason), out);
    }

    fn broadcast_shutdown(&mut self, reason: Option<String>, out: &mut Vec<Delivery>) {
        let conns: Vec<ConnId> = self.sessions.iter().filter(|s| s.connected).map(|s| s.conn).collect();
        for conn in conns {
            let seq = self.next_seq();
            let msg = Message { msg: reason.clone(), ..Message::new(MsgType::Shutdown, BROKER_NAME, seq) };
            out.push(Delivery { conn, msg });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn reg(b: &mut Broker, conn: ConnId, name: &str, mode: Mode, subs: &[&str]) -> Vec<Delivery> {
        let subs = subs.iter().map(|s| s.to_string()).collect();
        b.handle_line(conn, &Message::register(name, 0, mode, subs).to_line())
    }

    fn schedule(steps: u64) -> Schedule {
        Schedule { steps, step_seconds: 60.0 }
    }

    #[test]
    fn empty_manifest_runs_to_completion() {
        let mut b = Broker::new(Manifest::new(schedule(3)));
        let mut advances = 0;
        while let Some(_) = b.ready_step() {
            b.advance();
            advances += 1;
        }
        assert_eq!(advances, 4);
        assert_eq!(b.phase(), &Phase::Finished);
    }

    #[test]
    fn ack_carries_schedule() {
        let mut b = Broker::new(Manifest::new(schedule(1440)).client("grid", Mode::Stepped));
        let out = reg(&mut b, 1, "grid", Mode::Stepped, &["setpoint/#"]);
        assert_eq!(out[0].msg.t, MsgType::RegisterAck);
        assert_eq!(out[0].msg.steps, Some(1440));
        assert_eq!(out[0].msg.step_seconds, Some(60.0));
    }

    #[test]
    fn duplicate_and_late_registrations_are_rejected() {
        let m = Manifest::new(schedule(2)).client("grid", Mode::Stepped);
        let mut b = Broker::new(m);
        reg(&mut b, 1, "grid", Mode::Stepped, &[]);
        let out = reg(&mut b, 2, "grid", Mode::Stepped, &[]);
        assert_eq!(out[0].msg.t, MsgType::Error);
        assert_eq!(out[0].msg.msg.as_deref(), Some("duplicate client grid"));
        b.advance();
        let out = reg(&mut b, 3, "grid", Mode::Stepped, &[]);
        assert_eq!(out[0].msg.t, MsgType::Error);
        let out = reg(&mut b, 4, "late", Mode::FreeRunning, &[]);
        assert_eq!(out[0].msg.msg.as_deref(), Some("unknown client late"));
    }

    #[test]
    fn barrier_releases_after_last_ack() {
        let m = Manifest::new(schedule(5))
            .client("a", Mode::Stepped)
            .client("b", Mode::Stepped)
            .client("c", Mode::Stepped);
        let mut b = Broker::new(m);
        for (i, n) in ["a", "b", "c"].iter().enumerate() {
            reg(&mut b, i as ConnId, n, Mode::Stepped, &[]);
        }
        assert_eq!(b.ready_step(), Some(1));
        assert_eq!(b.advance().len(), 3);
        for (i, n) in [(2, "c"), (0, "a")] {
            b.handle_line(i, &Message::step_done(n, 1, 1).to_line());
            assert_eq!(b.ready_step(), None);
        }
        b.handle_line(1, &Message::step_done("b", 1, 1).to_line());
        assert_eq!(b.ready_step(), Some(2));
        // A repeated ack is stale and does not count twice.
        b.handle_line(1, &Message::step_done("b", 2, 1).to_line());
        assert!(matches!(b.events().last(), Some(Event::Stale { .. })));
    }

    #[test]
    fn routing_and_malformed_topic() {
        let m = Manifest::new(schedule(1)).client("p", Mode::Stepped).client("r", Mode::FreeRunning);
        let mut b = Broker::new(m);
        reg(&mut b, 0, "p", Mode::Stepped, &[]);
        reg(&mut b, 1, "r", Mode::FreeRunning, &["signal/#"]);
        let out = b.handle_line(0, &Message::publish("p", 1, "signal/grid/x", Some(1), json!(1.5)).to_line());
        assert_eq!(out, vec![Delivery { conn: 1, msg: Message::publish("p", 1, "signal/grid/x", Some(1), json!(1.5)) }]);
        let out = b.handle_line(0, &Message::publish("p", 2, "a//b", None, json!(0)).to_line());
        assert_eq!(out[0].msg.t, MsgType::Error);
        assert!(out[0].msg.msg.as_deref().unwrap().starts_with("malformed topic"));
        let out = b.handle_line(0, &Message::publish("p", 2, "signal/x", None, json!(0)).to_line());
        assert_eq!(out[0].msg.t, MsgType::Error, "seq must increase");
    }

    #[test]
    fn stepped_disconnect_aborts_free_running_does_not() {
        let m = Manifest::new(schedule(3)).client("s", Mode::Stepped).client("f", Mode::FreeRunning);
        let mut b = Broker::new(m);
        reg(&mut b, 0, "s", Mode::Stepped, &[]);
        reg(&mut b, 1, "f", Mode::FreeRunning, &[]);
        b.advance();
        b.disconnect(1);
        assert_eq!(b.phase(), &Phase::Running);
        let out = b.disconnect(0);
        assert!(matches!(b.phase(), Phase::Aborted(_)));
        assert!(out.is_empty(), "nobody left to notify");
    }

    #[test]
    fn transcript_lines_round_trip() {
        for input in [
            Input::Advance,
            Input::Abort { reason: "client grid exited".into() },
            Input::Disconnect { conn: 4 },
            Input::Line { conn: 2, line: r#"{"t":"STEP_DONE","from":"a b","seq":3,"step":1}"#.into() },
        ] {
            assert_eq!(Input::from_transcript_line(&input.to_transcript_line()).unwrap(), input);
        }
        assert!(Input::from_transcript_line("Q 1").is_err());
        assert!(Input::from_transcript_line("A 1").is_err());
    }
}
