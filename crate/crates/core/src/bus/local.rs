use std::collections::VecDeque;
use std::time::{Duration, Instant};

use super::broker::{Broker, ConnId, Delivery, Event, Input, Manifest, Phase};
use super::message::{Message, MsgType};
use super::participant::{Outbox, Participant};
use super::BusError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Pacing {
    /// Advance as soon as the barrier releases.
    Fast,
    /// Broadcast step `n` no earlier than `(n - 1) · step_seconds / speedup`
    /// of wall time after the start.
    Paced { speedup: f64 },
}

impl Pacing {
    /// Wall-clock offset at which step `n` may be broadcast.
    pub fn offset(&self, step: u64, step_seconds: f64) -> Duration {
        match *self {
            Pacing::Fast => Duration::ZERO,
            Pacing::Paced { speedup } => {
                Duration::from_secs_f64(step.saturating_sub(1) as f64 * step_seconds / speedup)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: Outcome,
    pub events: Vec<Event>,
    pub log: String,
    pub transcript: String,
    /// Errors raised by clients, with the client name.
    pub client_errors: Vec<(String, String)>,
    pub wall: Duration,
}

impl RunReport {
    pub(crate) fn from_broker(broker: &Broker, client_errors: Vec<(String, String)>, wall: Duration) -> Self {
        let outcome = match broker.phase() {
            Phase::Aborted(reason) => Outcome::Aborted(reason.clone()),
            Phase::Finished => Outcome::Completed,
            other => Outcome::Aborted(format!("broker stopped in phase {other:?}")),
        };
        Self {
            outcome,
            events: broker.events().to_vec(),
            log: broker.log_text(),
            transcript: broker.transcript_text(),
            client_errors,
            wall,
        }
    }

    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }
}

struct Slot {
    participant: Box<dyn Participant>,
    out: Outbox,
    registered: bool,
    done: bool,
}

/// Single-threaded driver: messages travel as lines through one FIFO queue,
/// so a fixed set of participants always yields the same event log.
pub struct LocalScheduler {
    broker: Broker,
    slots: Vec<Slot>,
    pacing: Pacing,
    queue: VecDeque<Delivery>,
    errors: Vec<(String, String)>,
}

impl LocalScheduler {
    pub fn new(manifest: Manifest, participants: Vec<Box<dyn Participant>>, pacing: Pacing) -> Self {
        let slots = participants
            .into_iter()
            .map(|p| Slot { out: Outbox::new(p.name()), participant: p, registered: false, done: false })
            .collect();
        Self { broker: Broker::new(manifest), slots, pacing, queue: VecDeque::new(), errors: Vec::new() }
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    /// Runs the schedule to completion or abort and hands the participants
    /// back. Fails only on a deadlock or a rejected registration.
    pub fn run(mut self) -> Result<(RunReport, Vec<Box<dyn Participant>>), BusError> {
        let started = Instant::now();
        let mut clock: Option<Instant> = None;
        for i in 0..self.slots.len() {
            let slot = &mut self.slots[i];
            let (mode, subs) = (slot.participant.mode(), slot.participant.subscriptions());
            slot.out.register(mode, subs);
            self.flush(i);
        }
        loop {
            while let Some(d) = self.queue.pop_front() {
                self.deliver(d)?;
            }
            if self.broker.is_done() {
                break;
            }
            if let Some(next) = self.broker.ready_step() {
                let t0 = *clock.get_or_insert_with(Instant::now);
                let due = t0 + self.pacing.offset(next, self.broker.sync_state().schedule.step_seconds);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
                let out = self.broker.apply(Input::Advance);
                self.queue.extend(out);
                continue;
            }
            let mut progressed = false;
            for i in 0..self.slots.len() {
                let slot = &mut self.slots[i];
                if !slot.registered || slot.done {
                    continue;
                }
                if let Err(e) = slot.participant.on_idle(&mut slot.out) {
                    self.fail(i, e);
                    progressed = true;
                    continue;
                }
                progressed |= !self.slots[i].out.is_empty();
                self.flush(i);
            }
            if !progressed && self.queue.is_empty() {
                let pending: Vec<String> = self.broker.sync_state().pending.iter().cloned().collect();
                return Err(BusError::Deadlock { step: self.broker.sync_state().step, pending });
            }
        }
        let report = RunReport::from_broker(&self.broker, self.errors, started.elapsed());
        Ok((report, self.slots.into_iter().map(|s| s.participant).collect()))
    }

    fn deliver(&mut self, d: Delivery) -> Result<(), BusError> {
        let i = d.conn as usize;
        if self.slots[i].done {
            return Ok(());
        }
        let msg = Message::from_line(&d.msg.to_line())?;
        match msg.t {
            MsgType::Shutdown => {
                let slot = &mut self.slots[i];
                slot.done = true;
                if let Err(e) = slot.participant.finish(msg.msg.as_deref()) {
                    self.errors.push((slot.participant.name().to_string(), e.to_string()));
                }
                return Ok(());
            }
            MsgType::Error if !self.slots[i].registered => {
                return Err(BusError::Rejected(msg.msg.unwrap_or_default()));
            }
            MsgType::RegisterAck => self.slots[i].registered = true,
            _ => {}
        }
        let slot = &mut self.slots[i];
        match slot.participant.on_message(&msg, &mut slot.out) {
            Ok(()) => self.flush(i),
            Err(e) => self.fail(i, e),
        }
        Ok(())
    }

    /// A failing client behaves like one whose connection dropped.
    fn fail(&mut self, i: usize, e: BusError) {
        let slot = &mut self.slots[i];
        log::error!("client {} failed: {e}", slot.participant.name());
        self.errors.push((slot.participant.name().to_string(), e.to_string()));
        slot.done = true;
        slot.out.drain();
        let out = self.broker.apply(Input::Disconnect { conn: i as ConnId });
        self.queue.extend(out);
    }

    fn flush(&mut self, i: usize) {
        for m in self.slots[i].out.drain() {
            let out = self.broker.apply(Input::Line { conn: i as ConnId, line: m.to_line() });
            self.queue.extend(out);
        }
    }
}

/// Feeds a recorded transcript into a fresh broker.
pub fn replay(manifest: Manifest, inputs: impl IntoIterator<Item = Input>) -> Broker {
    let mut broker = Broker::new(manifest);
    for input in inputs {
        broker.apply(input);
    }
    broker
}
