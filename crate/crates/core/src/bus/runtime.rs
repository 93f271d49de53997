use std::collections::HashMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::broker::{Broker, ConnId, Input, Manifest};
use super::local::{Pacing, RunReport};
use super::participant::{run_participant, Link, Participant};
use super::BusError;

pub const DEFAULT_PORT: u16 = 7788;

const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

/// Transport events funneled into the broker's single event loop.
pub(crate) enum Wire {
    Open(ConnId, Sender<String>),
    Line(ConnId, String),
    Closed(ConnId),
    Abort(String),
}

/// Runs the broker until the experiment finishes or aborts. All state
/// changes happen on this thread, one event at a time.
pub(crate) fn broker_loop(broker: &mut Broker, events: Receiver<Wire>, pacing: Pacing) -> Result<(), BusError> {
    let mut writers: HashMap<ConnId, Sender<String>> = HashMap::new();
    let mut clock: Option<Instant> = None;
    let step_seconds = broker.sync_state().schedule.step_seconds;
    loop {
        let mut wait = None;
        if let Some(next) = broker.ready_step() {
            let t0 = *clock.get_or_insert_with(Instant::now);
            let due = t0 + pacing.offset(next, step_seconds);
            let now = Instant::now();
            if due <= now {
                let out = broker.apply(Input::Advance);
                dispatch(&writers, out);
                continue;
            }
            wait = Some(due - now);
        } else if broker.is_done() {
            drain(&mut writers, &events);
            return Ok(());
        }
        let event = match wait {
            Some(d) => match events.recv_timeout(d) {
                Ok(e) => e,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Err(BusError::Closed),
            },
            None => events.recv().map_err(|_| BusError::Closed)?,
        };
        match event {
            Wire::Open(conn, tx) => {
                writers.insert(conn, tx);
            }
            Wire::Line(conn, line) => {
                let out = broker.apply(Input::Line { conn, line });
                dispatch(&writers, out);
            }
            Wire::Closed(conn) => {
                writers.remove(&conn);
                let out = broker.apply(Input::Disconnect { conn });
                dispatch(&writers, out);
            }
            Wire::Abort(reason) => {
                let out = broker.apply(Input::Abort { reason });
                dispatch(&writers, out);
            }
        }
    }
}

/// After the run, lets connected clients read SHUTDOWN and leave on their
/// own. Late lines are dropped; they are not part of the session.
fn drain(writers: &mut HashMap<ConnId, Sender<String>>, events: &Receiver<Wire>) {
    let deadline = Instant::now() + SHUTDOWN_GRACE;
    while !writers.is_empty() {
        let Some(left) = deadline.checked_duration_since(Instant::now()) else {
            return;
        };
        match events.recv_timeout(left) {
            Ok(Wire::Closed(conn)) => {
                writers.remove(&conn);
            }
            Ok(_) => {}
            Err(_) => return,
        }
    }
}

fn dispatch(writers: &HashMap<ConnId, Sender<String>>, out: Vec<super::broker::Delivery>) {
    for d in out {
        if let Some(w) = writers.get(&d.conn) {
            // A closed writer shows up as a Closed event from its reader.
            let _ = w.send(d.msg.to_line());
        }
    }
}

struct ChannelLink {
    conn: ConnId,
    to_broker: Sender<Wire>,
    inbox: Receiver<String>,
}

impl Link for ChannelLink {
    fn send(&mut self, line: String) -> Result<(), BusError> {
        self.to_broker.send(Wire::Line(self.conn, line)).map_err(|_| BusError::Closed)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<String>, BusError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(line) => Ok(Some(line)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(BusError::Closed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeOptions {
    pub pacing: Pacing,
    /// Silence after which a client's idle hook runs.
    pub idle: Duration,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self { pacing: Pacing::Fast, idle: Duration::from_millis(500) }
    }
}

type Finished = (Box<dyn Participant>, Result<Option<String>, BusError>);

/// One thread per participant plus the broker loop on the calling thread,
/// connected by in-process channels carrying protocol lines.
pub fn run_threaded(
    manifest: Manifest,
    participants: Vec<Box<dyn Participant>>,
    opts: RuntimeOptions,
) -> Result<(RunReport, Vec<Box<dyn Participant>>), BusError> {
    let started = Instant::now();
    let (tx, rx) = mpsc::channel();
    let mut handles = Vec::new();
    for (i, mut p) in participants.into_iter().enumerate() {
        let conn = i as ConnId;
        let (to_client, inbox) = mpsc::channel();
        tx.send(Wire::Open(conn, to_client)).expect("receiver alive");
        let mut link = ChannelLink { conn, to_broker: tx.clone(), inbox };
        let idle = opts.idle;
        handles.push(thread::spawn(move || -> Finished {
            let result = run_participant(p.as_mut(), &mut link, idle);
            let _ = link.to_broker.send(Wire::Closed(conn));
            (p, result)
        }));
    }
    drop(tx);
    let mut broker = Broker::new(manifest);
    let loop_result = broker_loop(&mut broker, rx, opts.pacing);
    let mut errors = Vec::new();
    let mut back = Vec::new();
    for h in handles {
        let (p, result) = h.join().map_err(|_| BusError::Client { name: "?".into(), message: "panicked".into() })?;
        if let Err(e) = result {
            errors.push((p.name().to_string(), e.to_string()));
        }
        back.push(p);
    }
    loop_result?;
    Ok((RunReport::from_broker(&broker, errors, started.elapsed()), back))
}

/// Lets a supervisor abort a running broker from another thread.
#[derive(Clone)]
pub struct AbortHandle(Sender<Wire>);

impl AbortHandle {
    pub fn abort(&self, reason: impl Into<String>) {
        let _ = self.0.send(Wire::Abort(reason.into()));
    }
}

/// TCP broker: newline-delimited JSON, one message per line.
pub struct TcpBroker {
    listener: TcpListener,
    manifest: Manifest,
    pacing: Pacing,
    tx: Sender<Wire>,
    rx: Receiver<Wire>,
}

impl TcpBroker {
    pub fn bind(addr: impl ToSocketAddrs, manifest: Manifest, pacing: Pacing) -> Result<Self, BusError> {
        let listener = TcpListener::bind(addr).map_err(|e| BusError::Bind(e.to_string()))?;
        let (tx, rx) = mpsc::channel();
        Ok(Self { listener, manifest, pacing, tx, rx })
    }

    pub fn abort_handle(&self) -> AbortHandle {
        AbortHandle(self.tx.clone())
    }

    pub fn local_addr(&self) -> Result<SocketAddr, BusError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts clients and runs the experiment to completion.
    pub fn serve(self) -> Result<RunReport, BusError> {
        let started = Instant::now();
        let (tx, rx) = (self.tx, self.rx);
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let stop = Arc::clone(&stop);
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, tx, stop))
        };
        let mut broker = Broker::new(self.manifest);
        let result = broker_loop(&mut broker, rx, self.pacing);
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        result?;
        Ok(RunReport::from_broker(&broker, Vec::new(), started.elapsed()))
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Wire>, stop: Arc<AtomicBool>) {
    let mut next: ConnId = 0;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("connection {next} from {peer}");
                if let Err(e) = attach(stream, next, &tx) {
                    log::warn!("dropping connection {next}: {e}");
                }
                next += 1;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::error!("accept failed: {e}");
                return;
            }
        }
    }
}

fn attach(stream: TcpStream, conn: ConnId, tx: &Sender<Wire>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let (to_client, outbox) = mpsc::channel::<String>();
    if tx.send(Wire::Open(conn, to_client)).is_err() {
        return Ok(());
    }
    thread::spawn(move || {
        for line in outbox {
            if writer.write_all(line.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                break;
            }
        }
    });
    let tx = tx.clone();
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            match line {
                Ok(l) if l.is_empty() => continue,
                Ok(l) => {
                    if tx.send(Wire::Line(conn, l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = tx.send(Wire::Closed(conn));
    });
    Ok(())
}

/// Client side of a TCP session.
pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    partial: Vec<u8>,
}

impl TcpLink {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, BusError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { writer: stream.try_clone()?, reader: BufReader::new(stream), partial: Vec::new() })
    }

    /// Retries until the broker accepts or `patience` runs out.
    pub fn connect_retry(addr: impl ToSocketAddrs + Clone, patience: Duration) -> Result<Self, BusError> {
        let deadline = Instant::now() + patience;
        loop {
            match Self::connect(addr.clone()) {
                Ok(link) => return Ok(link),
                Err(e) if Instant::now() >= deadline => return Err(e),
                Err(_) => thread::sleep(Duration::from_millis(20)),
            }
        }
    }
}

impl Link for TcpLink {
    fn send(&mut self, line: String) -> Result<(), BusError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<String>, BusError> {
        self.reader.get_ref().set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        match self.reader.read_until(b'\n', &mut self.partial) {
            Ok(0) => Err(BusError::Closed),
            Ok(_) if self.partial.ends_with(b"\n") => {
                let bytes = std::mem::take(&mut self.partial);
                Ok(Some(String::from_utf8_lossy(&bytes).trim_end().to_string()))
            }
            Ok(_) => Err(BusError::Closed),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Connects a participant to a TCP broker and runs it until SHUTDOWN.
pub fn run_tcp_client(
    addr: impl ToSocketAddrs + Clone,
    participant: &mut dyn Participant,
    idle: Duration,
) -> Result<Option<String>, BusError> {
    let mut link = TcpLink::connect_retry(addr, Duration::from_secs(10))?;
    run_participant(participant, &mut link, idle)
}
