//! Electrical-distance cell identification.
//!
//! Pipeline: the `dQ/du` block of the Jacobian is inverted into a voltage
//! sensitivity matrix, normalized column-wise into attenuations
//! `a_ij = b_ij / b_jj`, turned into distances `D_ij = -ln(a_ij a_ji)`,
//! row-normalized, and clustered with average linkage.

mod cluster;
mod distance;
mod heatmap;
mod sensitivity;

pub use cluster::{cluster_cells, cluster_indices, CellPartition};
pub use distance::{
    attenuation_matrix, electrical_distance, normalize_distance, AttenuationMatrix, DistanceMatrix,
    DISTANCE_CAP,
};
pub use heatmap::{count_above, export_heatmap, write_matrix_csv};
pub use sensitivity::{sensitivity_matrix, SensitivityMatrix};

use thiserror::Error;

use crate::grid::{to_per_unit, Network};
use crate::powerflow::{jacobian, solve_power_flow, PowerFlowError, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Error)]
pub enum CellError {
    #[error("dQ/du block is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("zero diagonal sensitivity at bus {0}")]
    ZeroDiagonal(String),
    #[error("distance row for bus {0} is all zero, cannot normalize")]
    ZeroRow(String),
    #[error("requested {k} cells but only {buses} buses are clusterable")]
    TooManyCells { k: usize, buses: usize },
    #[error("cell count must be at least 1")]
    ZeroCells,
    #[error("cell {0} has no controllable device")]
    NoControllableDevice(usize),
    #[error("power flow: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("operating point for clustering did not converge")]
    NotConverged,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Every artifact of the distance pipeline for one network.
#[derive(Debug, Clone)]
pub struct DistancePipeline {
    pub sensitivity: SensitivityMatrix,
    pub attenuation: AttenuationMatrix,
    pub distance: DistanceMatrix,
    pub normalized: DistanceMatrix,
}

/// Flat-start power flow, Jacobian at the solution, then the full distance
/// pipeline.
pub fn distance_pipeline(net: &Network) -> Result<DistancePipeline, CellError> {
    let pu = to_per_unit(net);
    let sol = solve_power_flow(&pu, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    if !sol.converged {
        return Err(CellError::NotConverged);
    }
    let jac = jacobian(&pu, &sol.v, &sol.delta);
    let sensitivity = sensitivity_matrix(&jac, &pu.bus_ids)?;
    let attenuation = attenuation_matrix(&sensitivity)?;
    let distance = electrical_distance(&attenuation);
    let normalized = normalize_distance(&distance)?;
    Ok(DistancePipeline { sensitivity, attenuation, distance, normalized })
}
