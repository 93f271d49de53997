//! Per-cell post-primary voltage control: differential evolution over the
//! reactive setpoints of each cell's controllable devices, minimizing
//! network losses plus a quadratic voltage-band penalty.

mod de;
mod objective;
mod rng;

pub use de::{differential_evolution, DeParams, DeResult, GenerationRecord};
pub use objective::{
    ppvc_objective, run_ppvc_cycle, voltage_penalty, CellObjective, DispatchResult, PpvcProblem, PpvcSettings,
    VoltageBand, NON_CONVERGED_OBJECTIVE,
};
pub use rng::SplitMix64;

use thiserror::Error;

use crate::cells::CellError;
use crate::powerflow::PowerFlowError;

#[derive(Debug, Error)]
pub enum PpvcError {
    #[error("invalid DE parameters: {0}")]
    InvalidParams(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("unknown cell {0}")]
    UnknownCell(usize),
    #[error("cell {0} has no controllable device")]
    NoDevices(usize),
    #[error("invalid voltage band [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("candidate has {got} values, cell has {expected} devices")]
    CandidateLength { expected: usize, got: usize },
    #[error("candidate value {value} MVAr for {device} outside [{lo}, {hi}]")]
    CandidateOutOfBounds { device: String, value: f64, lo: f64, hi: f64 },
    #[error("base operating point did not converge")]
    BaseCase,
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Cells(#[from] CellError),
}
