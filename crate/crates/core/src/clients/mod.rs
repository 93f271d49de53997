//! Bus clients: grid model, simulated PV converter, profile player,
//! recorder and the per-cell voltage controller.

mod converter;
mod droop;
mod grid_client;
mod player;
mod ppvc_client;
mod profile;
mod recorder;
mod state;

pub use converter::{converter_step, ConverterClient, ConverterConfig, ConverterState};
pub use droop::{qu_droop, DroopCurve};
pub use grid_client::{GridClient, GridConfig};
pub use player::ProfilePlayer;
pub use ppvc_client::{CycleRecord, PpvcClient, PpvcClientConfig};
pub use profile::Profile;
pub use recorder::{Record, RecordStore, RecorderClient, RecorderClock};
pub use state::{build_state, OperatingPoint};

use thiserror::Error;

/// Topic names shared by the clients.
pub mod topics {
    pub const PROFILE_LOAD: &str = "signal/profile/load";
    pub const PROFILE_IRRADIANCE: &str = "signal/profile/irradiance";
    pub const LOSSES: &str = "signal/grid/losses_mw";
    pub const V_MIN: &str = "signal/grid/v_min";
    pub const V_MAX: &str = "signal/grid/v_max";
    pub const VIOLATIONS: &str = "signal/grid/violations";
    pub const LOAD_SCALE: &str = "signal/grid/load_scale";
    pub const PV_SCALE: &str = "signal/grid/pv_scale";
    pub const EXTERNAL_P: &str = "signal/grid/external/p_mw";
    pub const EXTERNAL_Q: &str = "signal/grid/external/q_mvar";
    pub const DIAGNOSTIC: &str = "signal/grid/diagnostic";
    pub const PPVC_OBJECTIVE: &str = "signal/ppvc/objective";
    pub const PPVC_INCUMBENT: &str = "signal/ppvc/incumbent";

    pub fn coupling_voltage(node: &str) -> String {
        format!("coupling/{node}/voltage")
    }

    pub fn bus_voltage(bus: &str) -> String {
        format!("signal/grid/{bus}/voltage")
    }

    pub fn device_pq(device: &str) -> String {
        format!("device/{device}/pq")
    }

    pub fn setpoint_q(generator: &str) -> String {
        format!("setpoint/{generator}/q")
    }

    /// Generator id of a `setpoint/<id>/q` topic.
    pub fn setpoint_generator(topic: &str) -> Option<&str> {
        topic.strip_prefix("setpoint/")?.strip_suffix("/q").filter(|g| !g.contains('/'))
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("droop curve: {0}")]
    Droop(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("converter: {0}")]
    Converter(String),
    #[error("recorder: {0}")]
    Recorder(String),
    #[error("grid client: {0}")]
    Grid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
