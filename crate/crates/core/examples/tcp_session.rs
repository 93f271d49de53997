//! A TCP session on a loopback port, then the recorded transcript replayed
//! into a fresh broker to reproduce the event log.

use std::thread;
use std::time::Duration;

use gridlink::bus::{
    parse_transcript, replay, run_tcp_client, BusError, Manifest, Message, Mode, MsgType, Outbox, Pacing,
    Participant, Schedule, TcpBroker,
};

struct Echo {
    name: &'static str,
    mode: Mode,
}

impl Participant for Echo {
    fn name(&self) -> &str {
        self.name
    }
    fn mode(&self) -> Mode {
        self.mode
    }
    fn subscriptions(&self) -> Vec<String> {
        vec!["ping/#".into()]
    }
    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        if let (MsgType::Step, Some(step)) = (msg.t, msg.step) {
            out.publish_number(&format!("ping/{}", self.name), step, step as f64);
            out.step_done(step);
        }
        Ok(())
    }
}

fn main() -> Result<(), BusError> {
    let manifest = Manifest::new(Schedule { steps: 5, step_seconds: 1.0 })
        .client("left", Mode::Stepped)
        .client("right", Mode::Stepped)
        .client("watcher", Mode::FreeRunning);
    let broker = TcpBroker::bind("127.0.0.1:0", manifest.clone(), Pacing::Fast)?;
    let addr = broker.local_addr()?;
    println!("broker on {addr}");
    let clients: Vec<_> = [("left", Mode::Stepped), ("right", Mode::Stepped), ("watcher", Mode::FreeRunning)]
        .into_iter()
        .map(|(name, mode)| {
            thread::spawn(move || run_tcp_client(addr, &mut Echo { name, mode }, Duration::from_millis(200)))
        })
        .collect();
    let report = broker.serve()?;
    for c in clients {
        c.join().expect("client thread")?;
    }

    let replayed = replay(manifest, parse_transcript(&report.transcript)?);
    println!("{} events, transcript of {} lines", report.events.len(), report.transcript.lines().count());
    println!("replay reproduces the log: {}", replayed.log_text() == report.log);
    Ok(())
}
