use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgType {
    Register,
    RegisterAck,
    Subscribe,
    Publish,
    Step,
    StepDone,
    Shutdown,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Takes part in the per-step barrier.
    Stepped,
    /// Publishes and consumes without blocking time advance.
    FreeRunning,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Stepped => "stepped",
            Mode::FreeRunning => "free_running",
        })
    }
}

/// One protocol message; serialized as a single JSON object per line.
///
/// Optional fields are omitted when absent and unknown fields are ignored
/// on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub t: MsgType,
    pub from: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
}

impl Message {
    pub fn new(t: MsgType, from: impl Into<String>, seq: u64) -> Self {
        Self {
            t,
            from: from.into(),
            seq,
            topic: None,
            step: None,
            val: None,
            mode: None,
            subs: None,
            steps: None,
            step_seconds: None,
            quality: None,
            msg: None,
        }
    }

    pub fn register(from: &str, seq: u64, mode: Mode, subs: Vec<String>) -> Self {
        Self { mode: Some(mode), subs: Some(subs), ..Self::new(MsgType::Register, from, seq) }
    }

    pub fn publish(from: &str, seq: u64, topic: &str, step: Option<u64>, val: Value) -> Self {
        Self { topic: Some(topic.to_string()), step, val: Some(val), ..Self::new(MsgType::Publish, from, seq) }
    }

    pub fn step(from: &str, seq: u64, step: u64) -> Self {
        Self { step: Some(step), ..Self::new(MsgType::Step, from, seq) }
    }

    pub fn step_done(from: &str, seq: u64, step: u64) -> Self {
        Self { step: Some(step), ..Self::new(MsgType::StepDone, from, seq) }
    }

    pub fn error(from: &str, seq: u64, text: impl Into<String>) -> Self {
        Self { msg: Some(text.into()), ..Self::new(MsgType::Error, from, seq) }
    }

    /// The value as a number, if it is one.
    pub fn number(&self) -> Option<f64> {
        self.val.as_ref().and_then(Value::as_f64)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, BusError> {
        Ok(serde_json::from_str(line.trim_end_matches(['\n', '\r']))?)
    }
}
