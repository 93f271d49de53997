use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        })
    }
}

impl FromStr for BusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slack" => Ok(BusKind::Slack),
            "pv" => Ok(BusKind::Pv),
            "pq" => Ok(BusKind::Pq),
            other => Err(format!("unknown bus kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    pub nominal_kv: f64,
    /// Voltage magnitude setpoint in per-unit, Slack and PV buses only.
    pub v_set: Option<f64>,
}

/// A line, or a transformer when `tap_ratio != 1` or the end voltages differ.
///
/// Transformers carry their total impedance in the per-km fields with
/// `length_km = 1`, referred to the `to_bus` voltage level.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub r_per_km: f64,
    pub x_per_km: f64,
    pub b_per_km: f64,
    pub length_km: f64,
    pub tap_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: String,
    pub bus: String,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    pub p_set_mw: f64,
    pub q_set_mvar: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    /// Reactive setpoint may be dispatched by a cell controller.
    pub controllable: bool,
    /// Injection is supplied by a co-simulation client rather than the model.
    pub external: bool,
}

/// Validated grid under test. Construct with [`Network::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub base_frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub generators: Vec<Generator>,
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        base_frequency_hz: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        loads: Vec<Load>,
        generators: Vec<Generator>,
    ) -> Result<Self, GridError> {
        let net = Self {
            name: name.into(),
            base_mva,
            base_frequency_hz,
            buses,
            branches,
            loads,
            generators,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(GridError::Invalid(format!("base_mva must be > 0, got {}", self.base_mva)));
        }
        if !(self.base_frequency_hz.is_finite() && self.base_frequency_hz > 0.0) {
            return Err(GridError::Invalid(format!(
                "base_frequency must be > 0, got {}",
                self.base_frequency_hz
            )));
        }

        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if !bus_ids.insert(bus.id.as_str()) {
                return Err(GridError::DuplicateId { kind: "bus", id: bus.id.clone() });
            }
            if !(bus.nominal_kv.is_finite() && bus.nominal_kv > 0.0) {
                return Err(GridError::Invalid(format!("bus {} nominal_kv must be > 0", bus.id)));
            }
            match (bus.kind, bus.v_set) {
                (BusKind::Pq, _) => {}
                (_, None) => {
                    return Err(GridError::Invalid(format!("{} bus {} needs v_set", bus.kind, bus.id)))
                }
                (_, Some(v)) if !(0.8..=1.2).contains(&v) => {
                    return Err(GridError::Invalid(format!(
                        "bus {} v_set {v} outside [0.8, 1.2] pu",
                        bus.id
                    )))
                }
                _ => {}
            }
        }
        match self.buses.iter().filter(|b| b.kind == BusKind::Slack).count() {
            0 => return Err(GridError::NoSlack),
            1 => {}
            n => return Err(GridError::MultipleSlack(n)),
        }

        let check_bus = |owner: &str, bus: &str| -> Result<(), GridError> {
            if bus_ids.contains(bus) {
                Ok(())
            } else {
                Err(GridError::DanglingBus { owner: owner.to_string(), bus: bus.to_string() })
            }
        };

        let mut ids = HashSet::new();
        for br in &self.branches {
            if !ids.insert(br.id.as_str()) {
                return Err(GridError::DuplicateId { kind: "branch", id: br.id.clone() });
            }
            check_bus(&br.id, &br.from_bus)?;
            check_bus(&br.id, &br.to_bus)?;
            if br.from_bus == br.to_bus {
                return Err(GridError::Invalid(format!("branch {} connects a bus to itself", br.id)));
            }
            if !(br.length_km.is_finite() && br.length_km > 0.0) {
                return Err(GridError::NonPositiveLength { branch: br.id.clone(), length: br.length_km });
            }
            if !(br.r_per_km.is_finite() && br.x_per_km.is_finite() && br.b_per_km.is_finite()) {
                return Err(GridError::Invalid(format!("branch {} has non-finite impedance", br.id)));
            }
            if br.r_per_km < 0.0 {
                return Err(GridError::Invalid(format!("branch {} has negative resistance", br.id)));
            }
            if br.r_per_km == 0.0 && br.x_per_km == 0.0 {
                return Err(GridError::Invalid(format!("branch {} has zero impedance", br.id)));
            }
            if !(br.tap_ratio.is_finite() && br.tap_ratio > 0.0) {
                return Err(GridError::Invalid(format!("branch {} tap ratio must be > 0", br.id)));
            }
        }

        let mut ids = HashSet::new();
        for load in &self.loads {
            if !ids.insert(load.id.as_str()) {
                return Err(GridError::DuplicateId { kind: "load", id: load.id.clone() });
            }
            check_bus(&load.id, &load.bus)?;
            if !(load.p_mw.is_finite() && load.q_mvar.is_finite()) {
                return Err(GridError::Invalid(format!("load {} has non-finite power", load.id)));
            }
        }

        let mut ids = HashSet::new();
        for gen in &self.generators {
            if !ids.insert(gen.id.as_str()) {
                return Err(GridError::DuplicateId { kind: "generator", id: gen.id.clone() });
            }
            check_bus(&gen.id, &gen.bus)?;
            if gen.q_min_mvar > gen.q_max_mvar {
                return Err(GridError::Invalid(format!("generator {} has q_min > q_max", gen.id)));
            }
            if gen.controllable && !(gen.q_min_mvar..=gen.q_max_mvar).contains(&gen.q_set_mvar) {
                return Err(GridError::Invalid(format!(
                    "generator {} q_set {} outside [{}, {}]",
                    gen.id, gen.q_set_mvar, gen.q_min_mvar, gen.q_max_mvar
                )));
            }
        }
        Ok(())
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn generator(&self, id: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn slack(&self) -> &Bus {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Buses adjacent to each bus, keyed by bus id.
    pub fn adjacency(&self) -> HashMap<&str, Vec<&str>> {
        let mut adj: HashMap<&str, Vec<&str>> =
            self.buses.iter().map(|b| (b.id.as_str(), Vec::new())).collect();
        for br in &self.branches {
            adj.entry(br.from_bus.as_str()).or_default().push(br.to_bus.as_str());
            adj.entry(br.to_bus.as_str()).or_default().push(br.from_bus.as_str());
        }
        adj
    }

    /// Copy of the network with every record list sorted by id.
    pub fn canonical(&self) -> Network {
        let mut net = self.clone();
        net.buses.sort_by(|a, b| a.id.cmp(&b.id));
        net.branches.sort_by(|a, b| a.id.cmp(&b.id));
        net.loads.sort_by(|a, b| a.id.cmp(&b.id));
        net.generators.sort_by(|a, b| a.id.cmp(&b.id));
        net
    }
}

/// Returns a copy of `net` with the length of one branch replaced.
pub fn modify_line_length(net: &Network, line_id: &str, new_length_km: f64) -> Result<Network, GridError> {
    if !(new_length_km.is_finite() && new_length_km > 0.0) {
        return Err(GridError::NonPositiveLength { branch: line_id.to_string(), length: new_length_km });
    }
    let mut out = net.clone();
    let branch = out
        .branches
        .iter_mut()
        .find(|b| b.id == line_id)
        .ok_or_else(|| GridError::UnknownBranch(line_id.to_string()))?;
    branch.length_km = new_length_km;
    Ok(out)
}

/// The three line-length changes that split the benchmark feeder into
/// weakly coupled voltage zones: `(line id, original km, modified km)`.
pub const WEAK_COUPLING_MODIFICATIONS: [(&str, f64, f64); 3] =
    [("line1", 2.8, 0.8), ("line2", 4.4, 1.4), ("line12", 1.3, 6.3)];

/// Applies [`WEAK_COUPLING_MODIFICATIONS`].
pub fn apply_weak_coupling_modifications(net: &Network) -> Result<Network, GridError> {
    WEAK_COUPLING_MODIFICATIONS
        .iter()
        .try_fold(net.clone(), |acc, (id, _, km)| modify_line_length(&acc, id, *km))
}
