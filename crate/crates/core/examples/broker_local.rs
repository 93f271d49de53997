//! Three stepped clients and one free-running listener on the deterministic
//! scheduler. Prints the broker event log.

use gridlink::bus::{BusError, LocalScheduler, Manifest, Message, Mode, MsgType, Outbox, Pacing, Participant, Schedule};

struct Counter {
    name: String,
}

impl Participant for Counter {
    fn name(&self) -> &str {
        &self.name
    }
    fn mode(&self) -> Mode {
        Mode::Stepped
    }
    fn subscriptions(&self) -> Vec<String> {
        Vec::new()
    }
    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        if let (MsgType::Step, Some(step)) = (msg.t, msg.step) {
            out.publish_number(&format!("demo/{}/count", self.name), step, step as f64);
            out.step_done(step);
        }
        Ok(())
    }
}

struct Listener {
    seen: usize,
}

impl Participant for Listener {
    fn name(&self) -> &str {
        "listener"
    }
    fn mode(&self) -> Mode {
        Mode::FreeRunning
    }
    fn subscriptions(&self) -> Vec<String> {
        vec!["demo/+/count".into()]
    }
    fn on_message(&mut self, msg: &Message, _out: &mut Outbox) -> Result<(), BusError> {
        if msg.t == MsgType::Publish {
            self.seen += 1;
        }
        Ok(())
    }
    fn finish(&mut self, _reason: Option<&str>) -> Result<(), BusError> {
        println!("listener saw {} publications", self.seen);
        Ok(())
    }
}

fn main() -> Result<(), BusError> {
    let mut manifest = Manifest::new(Schedule { steps: 3, step_seconds: 60.0 });
    let mut clients: Vec<Box<dyn Participant>> = Vec::new();
    for name in ["a", "b", "c"] {
        manifest = manifest.client(name, Mode::Stepped);
        clients.push(Box::new(Counter { name: name.into() }));
    }
    manifest = manifest.client("listener", Mode::FreeRunning);
    clients.push(Box::new(Listener { seen: 0 }));

    let (report, _) = LocalScheduler::new(manifest, clients, Pacing::Fast).run()?;
    print!("{}", report.log);
    Ok(())
}
