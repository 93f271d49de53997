use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde_json::Value;

use super::ClientError;
use crate::bus::{BusError, Message, Mode, MsgType, Outbox, Participant};
use crate::numfmt::sig9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub step: u64,
    pub wall_time_ms: u64,
    pub value: f64,
}

/// Append-only series per topic. Values are kept at 9 significant digits,
/// the precision of the CSV export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordStore {
    series: BTreeMap<String, Vec<Record>>,
}

fn round9(x: f64) -> f64 {
    sig9(x).parse().expect("sig9 output parses")
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, topic: &str, step: u64, wall_time_ms: u64, value: f64) -> Result<(), ClientError> {
        let series = self.series.entry(topic.to_string()).or_default();
        if let Some(last) = series.last() {
            if step < last.step {
                return Err(ClientError::Recorder(format!("{topic}: step {step} after step {}", last.step)));
            }
        }
        series.push(Record { step, wall_time_ms, value: round9(value) });
        Ok(())
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, topic: &str) -> &[Record] {
        self.series.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn values(&self, topic: &str) -> Vec<f64> {
        self.series(topic).iter().map(|r| r.value).collect()
    }

    pub fn len(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with columns `topic,step,wall_time_ms,value`, sorted by topic
    /// then step.
    pub fn to_csv(&self) -> Result<String, ClientError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["topic", "step", "wall_time_ms", "value"])?;
        for (topic, series) in &self.series {
            for r in series {
                w.write_record([topic.clone(), r.step.to_string(), r.wall_time_ms.to_string(), sig9(r.value)])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| ClientError::Recorder(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, ClientError> {
        let mut store = Self::new();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["topic", "step", "wall_time_ms", "value"] {
            return Err(ClientError::Recorder(format!("unexpected header {headers:?}")));
        }
        for row in r.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or_default();
            let bad = |what: &str| ClientError::Recorder(format!("line {line}: bad {what}"));
            let step = row[1].parse().map_err(|_| bad("step"))?;
            let wall = row[2].parse().map_err(|_| bad("wall_time_ms"))?;
            let value = row[3].parse().map_err(|_| bad("value"))?;
            store.append(&row[0], step, wall, value)?;
        }
        Ok(store)
    }

    pub fn export_csv(&self, path: &Path) -> Result<(), ClientError> {
        let io = |source| ClientError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(path, self.to_csv()?).map_err(io)
    }

    pub fn import_csv(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|source| ClientError::Io { path: path.display().to_string(), source })?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RecorderClock {
    /// `step · step_seconds`, in milliseconds; reproducible.
    Simulated { step_seconds: f64 },
    /// Milliseconds since the recorder was created.
    Wall(Instant),
}

impl RecorderClock {
    fn now_ms(&self, step: u64) -> u64 {
        match *self {
            RecorderClock::Simulated { step_seconds } => (step as f64 * step_seconds * 1000.0).round() as u64,
            RecorderClock::Wall(t0) => t0.elapsed().as_millis() as u64,
        }
    }
}

/// Free-running client storing every numeric publication it receives.
/// Object payloads are stored per key under `<topic>/<key>`.
pub struct RecorderClient {
    name: String,
    subs: Vec<String>,
    store: Arc<Mutex<RecordStore>>,
    clock: RecorderClock,
    export: Option<PathBuf>,
}

impl RecorderClient {
    pub fn new(name: &str, subs: Vec<String>, clock: RecorderClock, export: Option<PathBuf>) -> Self {
        Self { name: name.to_string(), subs, store: Arc::default(), clock, export }
    }

    /// Shared handle to the store, readable after the run.
    pub fn store(&self) -> Arc<Mutex<RecordStore>> {
        Arc::clone(&self.store)
    }

    fn record(&self, topic: &str, step: u64, val: &Value) -> Result<(), ClientError> {
        let t = self.clock.now_ms(step);
        let mut store = self.store.lock().expect("recorder store poisoned");
        match val {
            Value::Number(n) => store.append(topic, step, t, n.as_f64().unwrap_or(f64::NAN)),
            Value::Object(map) => {
                for (k, v) in map {
                    if let Some(x) = v.as_f64() {
                        store.append(&format!("{topic}/{k}"), step, t, x)?;
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Participant for RecorderClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn mode(&self) -> Mode {
        Mode::FreeRunning
    }

    fn subscriptions(&self) -> Vec<String> {
        self.subs.clone()
    }

    fn on_message(&mut self, msg: &Message, _out: &mut Outbox) -> Result<(), BusError> {
        if msg.t != MsgType::Publish {
            return Ok(());
        }
        if let (Some(topic), Some(val)) = (&msg.topic, &msg.val) {
            self.record(topic, msg.step.unwrap_or_default(), val).map_err(|e| BusError::client(&self.name, e))?;
        }
        Ok(())
    }

    fn finish(&mut self, _reason: Option<&str>) -> Result<(), BusError> {
        if let Some(path) = &self.export {
            let store = self.store.lock().expect("recorder store poisoned");
            store.export_csv(path).map_err(|e| BusError::client(&self.name, e))?;
        }
        Ok(())
    }
}
