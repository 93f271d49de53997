use std::collections::BTreeMap;

use crate::grid::PerUnitNetwork;

/// Time-varying inputs applied on top of the base network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatingPoint {
    /// Multiplier on every load's P and Q.
    pub load_scale: f64,
    /// Multiplier on the active power of internal generators.
    pub pv_scale: f64,
    /// Injection of the external device, MW / MVAr, generator reference.
    pub external: Option<(f64, f64)>,
    /// Reactive setpoints in MVAr by generator id.
    pub q_setpoints: BTreeMap<String, f64>,
}

impl OperatingPoint {
    pub fn nominal() -> Self {
        Self { load_scale: 1.0, pv_scale: 1.0, ..Self::default() }
    }
}

/// Network at an operating point. External generators inject
/// `op.external` (zero when absent); setpoints are clamped to the limits.
pub fn build_state(base: &PerUnitNetwork, op: &OperatingPoint) -> PerUnitNetwork {
    let mut net = base.clone();
    let mva = net.base_mva;
    for load in &mut net.loads {
        load.p *= op.load_scale;
        load.q *= op.load_scale;
    }
    for g in &mut net.generators {
        if g.external {
            let (p, q) = op.external.unwrap_or((0.0, 0.0));
            g.p = p / mva;
            g.q = q / mva;
            continue;
        }
        g.p *= op.pv_scale;
        if let Some(&q) = op.q_setpoints.get(&g.id) {
            let q_pu = q / mva;
            if q_pu < g.q_min - 1e-12 || q_pu > g.q_max + 1e-12 {
                log::warn!("setpoint {q} MVAr for {} clamped to its limits", g.id);
            }
            g.q = q_pu.clamp(g.q_min, g.q_max);
        }
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{benchmark, to_per_unit};

    #[test]
    fn nominal_point_only_zeroes_external_device() {
        let base = to_per_unit(&benchmark::network());
        let net = build_state(&base, &OperatingPoint::nominal());
        for (a, b) in net.generators.iter().zip(&base.generators) {
            if a.external {
                assert_eq!((a.p, a.q), (0.0, 0.0));
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(net.loads, base.loads);
    }

    #[test]
    fn scaling_and_setpoints() {
        let base = to_per_unit(&benchmark::network());
        let mut op = OperatingPoint { load_scale: 0.5, pv_scale: 0.0, external: Some((0.02, -0.01)), ..Default::default() };
        op.q_setpoints.insert("PV03".into(), 0.1);
        op.q_setpoints.insert("PV04".into(), 9.0);
        let net = build_state(&base, &op);
        assert_eq!(net.loads[0].p, base.loads[0].p * 0.5);
        let g = |id: &str| &net.generators[net.generator_index(id).unwrap()];
        assert_eq!(g("PV03").p, 0.0);
        assert!((g("PV03").q - 0.001).abs() < 1e-15);
        assert_eq!(g("PV04").q, g("PV04").q_max);
        assert!((g("PV09").p - 0.0002).abs() < 1e-15);
    }
}
