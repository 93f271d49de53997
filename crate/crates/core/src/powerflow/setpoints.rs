use std::collections::BTreeMap;

use super::PowerFlowError;
use crate::grid::PerUnitNetwork;

/// Generator id → `(p_set MW, q_set MVAr)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Setpoints(pub BTreeMap<String, (f64, f64)>);

impl Setpoints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, p_mw: f64, q_mvar: f64) {
        self.0.insert(id.into(), (p_mw, q_mvar));
    }

    pub fn get(&self, id: &str) -> Option<(f64, f64)> {
        self.0.get(id).copied()
    }

    pub fn extend(&mut self, other: &Setpoints) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &(f64, f64))> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Returns a copy of `net` with the listed generators' injections replaced.
///
/// Fails without modifying anything if an id is unknown or a reactive
/// setpoint lies outside the generator's limits.
pub fn apply_setpoints(net: &PerUnitNetwork, setpoints: &Setpoints) -> Result<PerUnitNetwork, PowerFlowError> {
    let base = net.base_mva;
    let mut out = net.clone();
    for (id, &(p_mw, q_mvar)) in setpoints.iter() {
        let gen = out
            .generators
            .iter_mut()
            .find(|g| &g.id == id)
            .ok_or_else(|| PowerFlowError::UnknownGenerator(id.clone()))?;
        let q = q_mvar / base;
        // Tolerate round-off from MVAr <-> pu conversions at the limits.
        let slack = 1e-12 * gen.q_max.abs().max(gen.q_min.abs()).max(1.0);
        if !(q.is_finite() && q >= gen.q_min - slack && q <= gen.q_max + slack) {
            return Err(PowerFlowError::QLimit {
                id: id.clone(),
                q_mvar,
                q_min_mvar: gen.q_min * base,
                q_max_mvar: gen.q_max * base,
            });
        }
        gen.p = p_mw / base;
        gen.q = q;
    }
    Ok(out)
}
