//! Grid data model, network file format, per-unit conversion and the bus
//! admittance matrix.

mod admittance;
mod format;
mod model;
mod per_unit;

pub use admittance::{admittance_matrix, branch_admittance, AdmittanceMatrix};
pub use format::{parse_network, parse_network_str, serialize_network, FORMAT_VERSION};
pub use model::{
    apply_weak_coupling_modifications, modify_line_length, Branch, Bus, BusKind, Generator, Load, Network,
    WEAK_COUPLING_MODIFICATIONS,
};
pub use per_unit::{to_per_unit, PuBranch, PuGenerator, PuLoad, PerUnitNetwork};

use crate::sectioned::SyntaxError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("unsupported or missing format tag, expected format={FORMAT_VERSION}")]
    FormatVersion,
    #[error("{owner} references unknown bus {bus:?}")]
    DanglingBus { owner: String, bus: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("branch {branch} length must be > 0 km, got {length}")]
    NonPositiveLength { branch: String, length: f64 },
    #[error("network has no slack bus")]
    NoSlack,
    #[error("network has {0} slack buses, expected exactly one")]
    MultipleSlack(usize),
    #[error("unknown branch {0:?}")]
    UnknownBranch(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Bundled CIGRE-MV-like benchmark feeder.
pub mod benchmark {
    use super::{parse_network_str, Network};

    pub const NETWORK_TEXT: &str = include_str!("../../data/cigre_mv_like.net");

    pub fn network() -> Network {
        parse_network_str(NETWORK_TEXT).expect("bundled benchmark parses")
    }
}
