use std::time::Duration;

use serde_json::Value;

use super::message::{Message, Mode, MsgType};
use super::BusError;

/// Client-side behaviour, independent of the transport that carries it.
pub trait Participant: Send {
    fn name(&self) -> &str;
    fn mode(&self) -> Mode;
    fn subscriptions(&self) -> Vec<String>;

    /// Called for every inbound message: the registration ack, STEP,
    /// routed PUBLISH and ERROR. SHUTDOWN is reported through `finish`.
    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError>;

    /// Called when nothing arrived for a while (threaded transports) or the
    /// whole system is quiescent (deterministic scheduler).
    fn on_idle(&mut self, _out: &mut Outbox) -> Result<(), BusError> {
        Ok(())
    }

    /// Called once on SHUTDOWN; `reason` is set when the experiment aborted.
    fn finish(&mut self, _reason: Option<&str>) -> Result<(), BusError> {
        Ok(())
    }
}

/// Outgoing messages of one session, stamped with the sender name and a
/// strictly increasing sequence number.
#[derive(Debug, Clone)]
pub struct Outbox {
    from: String,
    seq: u64,
    queue: Vec<Message>,
}

impl Outbox {
    pub fn new(from: &str) -> Self {
        Self { from: from.to_string(), seq: 0, queue: Vec::new() }
    }

    fn stamp(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn register(&mut self, mode: Mode, subs: Vec<String>) {
        let seq = self.stamp();
        self.queue.push(Message::register(&self.from, seq, mode, subs));
    }

    pub fn subscribe(&mut self, patterns: Vec<String>) {
        let seq = self.stamp();
        self.queue.push(Message { subs: Some(patterns), ..Message::new(MsgType::Subscribe, &self.from, seq) });
    }

    pub fn publish(&mut self, topic: &str, step: Option<u64>, val: Value) {
        let seq = self.stamp();
        self.queue.push(Message::publish(&self.from, seq, topic, step, val));
    }

    pub fn publish_number(&mut self, topic: &str, step: u64, val: f64) {
        self.publish(topic, Some(step), Value::from(val));
    }

    pub fn step_done(&mut self, step: u64) {
        let seq = self.stamp();
        self.queue.push(Message::step_done(&self.from, seq, step));
    }

    pub fn step_done_with_quality(&mut self, step: u64, quality: &str, detail: Option<String>) {
        let seq = self.stamp();
        let msg = Message { quality: Some(quality.to_string()), msg: detail, ..Message::step_done(&self.from, seq, step) };
        self.queue.push(msg);
    }

    pub fn error(&mut self, text: impl Into<String>) {
        let seq = self.stamp();
        self.queue.push(Message::error(&self.from, seq, text));
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn drain(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.queue)
    }
}

/// Line-oriented duplex connection to the broker.
pub trait Link {
    fn send(&mut self, line: String) -> Result<(), BusError>;
    /// `Ok(None)` on timeout, `Err(BusError::Closed)` when the peer is gone.
    fn recv(&mut self, timeout: Duration) -> Result<Option<String>, BusError>;
}

/// Drives a participant over a link until SHUTDOWN. Returns the abort reason,
/// if any.
pub fn run_participant(p: &mut dyn Participant, link: &mut dyn Link, idle: Duration) -> Result<Option<String>, BusError> {
    let mut out = Outbox::new(p.name());
    out.register(p.mode(), p.subscriptions());
    flush(&mut out, link)?;
    let mut registered = false;
    loop {
        let Some(line) = link.recv(idle)? else {
            if registered {
                p.on_idle(&mut out)?;
                flush(&mut out, link)?;
            }
            continue;
        };
        let msg = Message::from_line(&line)?;
        match msg.t {
            MsgType::Shutdown => {
                p.finish(msg.msg.as_deref())?;
                return Ok(msg.msg);
            }
            MsgType::Error if !registered => {
                return Err(BusError::Rejected(msg.msg.unwrap_or_default()));
            }
            MsgType::RegisterAck => registered = true,
            _ => {}
        }
        p.on_message(&msg, &mut out)?;
        flush(&mut out, link)?;
    }
}

fn flush(out: &mut Outbox, link: &mut dyn Link) -> Result<(), BusError> {
    for m in out.drain() {
        link.send(m.to_line())?;
    }
    Ok(())
}
