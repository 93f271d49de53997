use std::collections::BTreeMap;

use serde_json::json;

use super::profile::Profile;
use super::state::{build_state, OperatingPoint};
use super::{topics, ClientError};
use crate::bus::{BusError, Message, Mode, MsgType, Outbox, Participant};
use crate::grid::PerUnitNetwork;
use crate::powerflow::{solve_power_flow, PowerFlowSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::ppvc::VoltageBand;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub name: String,
    /// Bus whose voltage is sent to the converter.
    pub coupling_node: String,
    /// Generator id driven by the converter's `(P, Q)`.
    pub external_device: Option<String>,
    /// Wait for load and irradiance publications each step instead of
    /// reading local profiles.
    pub profiles_from_bus: bool,
    /// Extra voltage/PQ exchanges within a step; 0 means one exchange.
    pub relaxation_iterations: usize,
    /// Voltage change (pu) that ends the relaxation early.
    pub relaxation_tol: f64,
    pub band: VoltageBand,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            name: "grid".into(),
            coupling_node: "node21".into(),
            external_device: Some("PV09".into()),
            profiles_from_bus: true,
            relaxation_iterations: 0,
            relaxation_tol: 1e-6,
            band: VoltageBand::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Relaxation {
    step: u64,
    iteration: usize,
    last_v: f64,
}

/// Stepped client wrapping the power flow: each step it applies profiles,
/// the latest setpoints and the converter output, solves, and publishes
/// voltages and losses.
pub struct GridClient {
    cfg: GridConfig,
    base: PerUnitNetwork,
    coupling_bus: usize,
    local: Option<(Profile, Profile)>,
    load: Option<(u64, f64)>,
    irradiance: Option<(u64, f64)>,
    setpoints: BTreeMap<String, f64>,
    /// Latest converter output, kW / kVAr.
    external_kw: Option<(f64, f64)>,
    pending: Option<u64>,
    solved: Option<u64>,
    relaxation: Option<Relaxation>,
}

impl GridClient {
    /// `local_profiles` is `(load, irradiance)` and is required when
    /// profiles are not read from the bus.
    pub fn new(cfg: GridConfig, base: PerUnitNetwork, local_profiles: Option<(Profile, Profile)>) -> Result<Self, ClientError> {
        let coupling_bus = base
            .bus_index(&cfg.coupling_node)
            .ok_or_else(|| ClientError::Grid(format!("unknown coupling node {}", cfg.coupling_node)))?;
        if let Some(dev) = &cfg.external_device {
            let g = base.generator_index(dev).ok_or_else(|| ClientError::Grid(format!("unknown device {dev}")))?;
            if !base.generators[g].external {
                return Err(ClientError::Grid(format!("{dev} is not marked external")));
            }
        }
        if !cfg.profiles_from_bus && local_profiles.is_none() {
            return Err(ClientError::Grid("no profile source".into()));
        }
        Ok(Self {
            cfg,
            base,
            coupling_bus,
            local: local_profiles,
            load: None,
            irradiance: None,
            setpoints: BTreeMap::new(),
            external_kw: None,
            pending: None,
            solved: None,
            relaxation: None,
        })
    }

    fn scales(&self, step: u64, allow_stale: bool) -> Option<(f64, f64)> {
        if let Some((load, irr)) = &self.local {
            return Some((load.at(step)?, irr.at(step)?));
        }
        let fresh = |v: Option<(u64, f64)>| v.filter(|&(s, _)| s == step || allow_stale).map(|(_, x)| x);
        Some((fresh(self.load)?, fresh(self.irradiance)?))
    }

    /// The operating point the grid applies at `step`.
    pub fn operating_point(&self, load_scale: f64, pv_scale: f64) -> OperatingPoint {
        OperatingPoint {
            load_scale,
            pv_scale,
            external: self.external_kw.map(|(p, q)| (p / 1000.0, q / 1000.0)),
            q_setpoints: self.setpoints.clone(),
        }
    }

    fn solve(&self, op: &OperatingPoint) -> Result<PowerFlowSolution, String> {
        let net = build_state(&self.base, op);
        match solve_power_flow(&net, DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(sol) if sol.converged => Ok(sol),
            Ok(sol) => Err(format!("power flow did not converge in {} iterations", sol.iterations)),
            Err(e) => Err(e.to_string()),
        }
    }

    fn try_solve(&mut self, allow_stale: bool, out: &mut Outbox) {
        let Some(step) = self.pending.filter(|&s| self.solved != Some(s)) else { return };
        let Some((load, irr)) = self.scales(step, allow_stale) else { return };
        self.solved = Some(step);
        let op = self.operating_point(load, irr);
        let sol = match self.solve(&op) {
            Ok(sol) => sol,
            Err(e) => return self.fault(step, e, out),
        };
        let v = sol.v[self.coupling_bus];
        out.publish_number(&topics::coupling_voltage(&self.cfg.coupling_node), step, v);
        if self.cfg.relaxation_iterations > 0 && self.cfg.external_device.is_some() {
            self.relaxation = Some(Relaxation { step, iteration: 0, last_v: v });
            return;
        }
        let quality = if allow_stale { Some("stale_profile") } else { None };
        self.finish_step(step, &op, &sol, quality, out);
    }

    fn relax(&mut self, force: bool, out: &mut Outbox) {
        let Some(mut r) = self.relaxation.take() else { return };
        let (load, irr) = self.scales(r.step, true).expect("scales known once solved");
        let op = self.operating_point(load, irr);
        let sol = match self.solve(&op) {
            Ok(sol) => sol,
            Err(e) => return self.fault(r.step, e, out),
        };
        let v = sol.v[self.coupling_bus];
        r.iteration += 1;
        let settled = (v - r.last_v).abs() < self.cfg.relaxation_tol;
        if settled || force || r.iteration >= self.cfg.relaxation_iterations {
            self.finish_step(r.step, &op, &sol, None, out);
        } else {
            out.publish_number(&topics::coupling_voltage(&self.cfg.coupling_node), r.step, v);
            r.last_v = v;
            self.relaxation = Some(r);
        }
    }

    fn finish_step(&self, step: u64, op: &OperatingPoint, sol: &PowerFlowSolution, quality: Option<&str>, out: &mut Outbox) {
        for (id, &v) in self.base.bus_ids.iter().zip(&sol.v) {
            out.publish_number(&topics::bus_voltage(id), step, v);
        }
        let (ext_p, ext_q) = op.external.unwrap_or((0.0, 0.0));
        let violations = sol.v.iter().filter(|&&v| !self.cfg.band.contains(v)).count();
        out.publish_number(topics::LOAD_SCALE, step, op.load_scale);
        out.publish_number(topics::PV_SCALE, step, op.pv_scale);
        out.publish_number(topics::EXTERNAL_P, step, ext_p);
        out.publish_number(topics::EXTERNAL_Q, step, ext_q);
        out.publish_number(topics::V_MIN, step, sol.v_min());
        out.publish_number(topics::V_MAX, step, sol.v_max());
        out.publish_number(topics::VIOLATIONS, step, violations as f64);
        let losses = sol.total_losses().expect("converged");
        out.publish_number(topics::LOSSES, step, losses);
        match quality {
            Some(q) => out.step_done_with_quality(step, q, None),
            None => out.step_done(step),
        }
    }

    fn fault(&mut self, step: u64, error: String, out: &mut Outbox) {
        log::warn!("grid step {step}: {error}");
        out.publish(topics::DIAGNOSTIC, Some(step), json!({ "error": error }));
        out.step_done_with_quality(step, "fault", Some(error));
    }
}

impl Participant for GridClient {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn mode(&self) -> Mode {
        Mode::Stepped
    }

    fn subscriptions(&self) -> Vec<String> {
        let mut subs = vec!["setpoint/#".to_string()];
        if let Some(dev) = &self.cfg.external_device {
            subs.push(topics::device_pq(&dev.to_lowercase()));
        }
        if self.cfg.profiles_from_bus {
            subs.push("signal/profile/#".to_string());
        }
        subs
    }

    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        match msg.t {
            MsgType::Step => {
                self.pending = msg.step;
                self.try_solve(false, out);
            }
            MsgType::Publish => {
                let topic = msg.topic.as_deref().unwrap_or_default();
                if let Some(gen) = topics::setpoint_generator(topic) {
                    if let Some(q) = msg.number() {
                        self.setpoints.insert(gen.to_string(), q);
                    }
                } else if topic == topics::PROFILE_LOAD || topic == topics::PROFILE_IRRADIANCE {
                    let (Some(step), Some(v)) = (msg.step, msg.number()) else { return Ok(()) };
                    if topic == topics::PROFILE_LOAD {
                        self.load = Some((step, v));
                    } else {
                        self.irradiance = Some((step, v));
                    }
                    self.try_solve(false, out);
                } else if topic.starts_with("device/") {
                    let val = msg.val.as_ref();
                    let field = |k: &str| val.and_then(|v| v.get(k)).and_then(|x| x.as_f64());
                    if let (Some(p), Some(q)) = (field("p_kw"), field("q_kvar")) {
                        self.external_kw = Some((p, q));
                        if self.relaxation.as_ref().is_some_and(|r| Some(r.step) == msg.step) {
                            self.relax(false, out);
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_idle(&mut self, out: &mut Outbox) -> Result<(), BusError> {
        if self.relaxation.is_some() {
            self.relax(true, out);
        } else {
            self.try_solve(true, out);
        }
        Ok(())
    }
}
