//! Newton-Raphson AC power flow with explicit Jacobian blocks.

mod jacobian;
mod newton;
mod setpoints;

pub use jacobian::{calculated_injections, jacobian, Jacobian};
pub use newton::{solve_power_flow, solve_power_flow_from, SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use setpoints::{apply_setpoints, Setpoints};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error("solution did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("generator {id}: q setpoint {q_mvar} MVAr outside [{q_min_mvar}, {q_max_mvar}]")]
    QLimit {
        id: String,
        q_mvar: f64,
        q_min_mvar: f64,
        q_max_mvar: f64,
    },
}

/// Complex power flowing into a branch at each end, per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub from: Complex64,
    pub to: Complex64,
    /// Series current magnitude squared times series resistance.
    pub series_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    /// Calculated net injection per bus, per-unit.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub branch_flows: Vec<BranchFlow>,
    pub base_mva: f64,
    /// Mismatch evaluations performed, including the final converged check.
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute P/Q mismatch at the last evaluation.
    pub max_mismatch: f64,
}

/// Below this magnitude a converged solution is reported as collapsed.
pub const COLLAPSE_VOLTAGE_PU: f64 = 0.5;

impl PowerFlowSolution {
    /// Real losses in MW from the power balance, Σ injections.
    pub fn total_losses(&self) -> Result<f64, PowerFlowError> {
        if !self.converged {
            return Err(PowerFlowError::NotConverged { iterations: self.iterations });
        }
        Ok(self.p_inj.iter().sum::<f64>() * self.base_mva)
    }

    /// Real losses in MW as Σ |I_series|² R over branches.
    pub fn series_losses(&self) -> Result<f64, PowerFlowError> {
        if !self.converged {
            return Err(PowerFlowError::NotConverged { iterations: self.iterations });
        }
        Ok(self.branch_flows.iter().map(|f| f.series_loss).sum::<f64>() * self.base_mva)
    }

    pub fn voltage_collapse(&self) -> bool {
        !self.converged || self.v.iter().any(|&v| v < COLLAPSE_VOLTAGE_PU)
    }

    pub fn v_min(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Convenience: total losses in MW of a converged solution.
pub fn total_losses(sol: &PowerFlowSolution) -> Result<f64, PowerFlowError> {
    sol.total_losses()
}
