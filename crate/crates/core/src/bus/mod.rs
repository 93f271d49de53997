//! Publish/subscribe broker with a lock-step synchronization host.
//!
//! Stepped clients acknowledge every step before time advances; free-running
//! clients publish and consume without ever holding the barrier. The broker
//! itself is a transport-free state machine driven by [`LocalScheduler`]
//! (single thread, deterministic), [`run_threaded`] (in-process channels) or
//! [`TcpBroker`] (newline-delimited JSON over TCP).

mod broker;
mod local;
mod message;
mod participant;
mod runtime;
mod topic;

pub use broker::{
    parse_transcript, Broker, ConnId, Delivery, Event, Input, Manifest, Phase, Schedule, SyncState, BROKER_NAME,
};
pub use local::{replay, LocalScheduler, Outcome, Pacing, RunReport};
pub use message::{Message, Mode, MsgType};
pub use participant::{run_participant, Link, Outbox, Participant};
pub use runtime::{run_tcp_client, run_threaded, AbortHandle, RuntimeOptions, TcpBroker, TcpLink, DEFAULT_PORT};
pub use topic::{matches, validate_pattern, validate_topic};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("malformed topic {0:?}")]
    MalformedTopic(String),
    #[error("bad message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad transcript line {0:?}")]
    Transcript(String),
    #[error("registration rejected: {0}")]
    Rejected(String),
    #[error("connection closed")]
    Closed,
    #[error("cannot bind: {0}")]
    Bind(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no progress at step {step}, waiting for {pending:?}")]
    Deadlock { step: u64, pending: Vec<String> },
    #[error("client {name}: {message}")]
    Client { name: String, message: String },
}

impl BusError {
    pub fn client(name: &str, message: impl std::fmt::Display) -> Self {
        BusError::Client { name: name.to_string(), message: message.to_string() }
    }
}
