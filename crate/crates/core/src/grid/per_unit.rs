use std::collections::HashMap;

use super::model::{Branch, Bus, BusKind, Generator, Load, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct PuBranch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, split half per end.
    pub b: f64,
    pub tap: f64,
    pub length_km: f64,
    /// Impedance base of the branch's voltage level in ohms.
    pub z_base: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuLoad {
    pub id: String,
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuGenerator {
    pub id: String,
    pub bus: usize,
    pub p: f64,
    pub q: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub controllable: bool,
    pub external: bool,
}

/// Network on a common MVA base with buses addressed by dense index.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUnitNetwork {
    pub name: String,
    pub base_mva: f64,
    pub base_frequency_hz: f64,
    pub bus_ids: Vec<String>,
    pub kinds: Vec<BusKind>,
    pub nominal_kv: Vec<f64>,
    pub v_set: Vec<Option<f64>>,
    pub slack: usize,
    pub branches: Vec<PuBranch>,
    pub loads: Vec<PuLoad>,
    pub generators: Vec<PuGenerator>,
}

pub fn to_per_unit(net: &Network) -> PerUnitNetwork {
    let index: HashMap<&str, usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let bus = |id: &str| index[id];

    let branches = net
        .branches
        .iter()
        .map(|br| {
            let kv = net.buses[bus(&br.to_bus)].nominal_kv;
            let z_base = kv * kv / net.base_mva;
            PuBranch {
                id: br.id.clone(),
                from: bus(&br.from_bus),
                to: bus(&br.to_bus),
                r: br.r_per_km * br.length_km / z_base,
                x: br.x_per_km * br.length_km / z_base,
                b: br.b_per_km * br.length_km * z_base,
                tap: br.tap_ratio,
                length_km: br.length_km,
                z_base,
            }
        })
        .collect();

    PerUnitNetwork {
        name: net.name.clone(),
        base_mva: net.base_mva,
        base_frequency_hz: net.base_frequency_hz,
        bus_ids: net.buses.iter().map(|b| b.id.clone()).collect(),
        kinds: net.buses.iter().map(|b| b.kind).collect(),
        nominal_kv: net.buses.iter().map(|b| b.nominal_kv).collect(),
        v_set: net.buses.iter().map(|b| b.v_set).collect(),
        slack: net
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus"),
        branches,
        loads: net
            .loads
            .iter()
            .map(|l| PuLoad {
                id: l.id.clone(),
                bus: bus(&l.bus),
                p: l.p_mw / net.base_mva,
                q: l.q_mvar / net.base_mva,
            })
            .collect(),
        generators: net
            .generators
            .iter()
            .map(|g| PuGenerator {
                id: g.id.clone(),
                bus: bus(&g.bus),
                p: g.p_set_mw / net.base_mva,
                q: g.q_set_mvar / net.base_mva,
                q_min: g.q_min_mvar / net.base_mva,
                q_max: g.q_max_mvar / net.base_mva,
                controllable: g.controllable,
                external: g.external,
            })
            .collect(),
    }
}

impl PerUnitNetwork {
    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_ids.iter().position(|b| b == id)
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    /// Net specified injections per bus, generation minus load.
    pub fn injections(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.bus_count();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for g in &self.generators {
            p[g.bus] += g.p;
            q[g.bus] += g.q;
        }
        for l in &self.loads {
            p[l.bus] -= l.p;
            q[l.bus] -= l.q;
        }
        (p, q)
    }

    /// Indices of all non-slack buses in bus order.
    pub fn non_slack(&self) -> Vec<usize> {
        (0..self.bus_count()).filter(|&i| self.kinds[i] != BusKind::Slack).collect()
    }

    /// Indices of PQ buses in bus order.
    pub fn pq_buses(&self) -> Vec<usize> {
        (0..self.bus_count()).filter(|&i| self.kinds[i] == BusKind::Pq).collect()
    }

    /// Multiplies every load by `factor`.
    pub fn scale_loads(&mut self, factor: f64) {
        for l in &mut self.loads {
            l.p *= factor;
            l.q *= factor;
        }
    }

    /// Converts back to physical units.
    pub fn to_physical(&self) -> Network {
        let buses = (0..self.bus_count())
            .map(|i| Bus {
                id: self.bus_ids[i].clone(),
                kind: self.kinds[i],
                nominal_kv: self.nominal_kv[i],
                v_set: self.v_set[i],
            })
            .collect();
        let branches = self
            .branches
            .iter()
            .map(|br| Branch {
                id: br.id.clone(),
                from_bus: self.bus_ids[br.from].clone(),
                to_bus: self.bus_ids[br.to].clone(),
                r_per_km: br.r * br.z_base / br.length_km,
                x_per_km: br.x * br.z_base / br.length_km,
                b_per_km: br.b / br.z_base / br.length_km,
                length_km: br.length_km,
                tap_ratio: br.tap,
            })
            .collect();
        let loads = self
            .loads
            .iter()
            .map(|l| Load {
                id: l.id.clone(),
                bus: self.bus_ids[l.bus].clone(),
                p_mw: l.p * self.base_mva,
                q_mvar: l.q * self.base_mva,
            })
            .collect();
        let generators = self
            .generators
            .iter()
            .map(|g| Generator {
                id: g.id.clone(),
                bus: self.bus_ids[g.bus].clone(),
                p_set_mw: g.p * self.base_mva,
                q_set_mvar: g.q * self.base_mva,
                q_min_mvar: g.q_min * self.base_mva,
                q_max_mvar: g.q_max * self.base_mva,
                controllable: g.controllable,
                external: g.external,
            })
            .collect();
        Network {
            name: self.name.clone(),
            base_mva: self.base_mva,
            base_frequency_hz: self.base_frequency_hz,
            buses,
            branches,
            loads,
            generators,
        }
    }
}
