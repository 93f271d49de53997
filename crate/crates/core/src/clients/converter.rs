use serde_json::json;

use super::droop::{qu_droop, DroopCurve};
use super::profile::Profile;
use super::{topics, ClientError};
use crate::bus::{BusError, Message, Mode, MsgType, Outbox, Participant};

/// Electrical state of the simulated PV converter, kW / kVAr / kVA.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterState {
    pub rated_s: f64,
    pub q_max: f64,
    /// Available DC power at irradiance 1.0.
    pub peak_kw: f64,
    pub p: f64,
    pub q: f64,
    pub node: String,
}

impl ConverterState {
    pub fn new(rated_s: f64, q_max: f64, peak_kw: f64, node: &str) -> Result<Self, ClientError> {
        if !(rated_s > 0.0 && q_max >= 0.0 && peak_kw >= 0.0) || !(rated_s + q_max + peak_kw).is_finite() {
            return Err(ClientError::Converter(format!(
                "invalid ratings: rated_s {rated_s}, q_max {q_max}, peak {peak_kw}"
            )));
        }
        Ok(Self { rated_s, q_max, peak_kw, p: 0.0, q: 0.0, node: node.to_string() })
    }
}

/// One converter update. `P` follows the available DC power, `Q` the droop
/// curve; when the apparent power would exceed `rated_s`, `Q` keeps priority
/// and `P` is reduced. Returns `(P, Q)` and stores it in `state`.
pub fn converter_step(state: &mut ConverterState, u: f64, p_available: f64, curve: &DroopCurve) -> (f64, f64) {
    let s = state.rated_s;
    let q_cap = state.q_max.min(s);
    let q = qu_droop(u, curve, state.q_max).clamp(-q_cap, q_cap);
    let mut p = p_available.clamp(0.0, s);
    if p * p + q * q > s * s {
        p = (s * s - q * q).max(0.0).sqrt();
    }
    state.p = p;
    state.q = q;
    (p, q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterConfig {
    pub name: String,
    /// Generator id the converter replaces in the grid model.
    pub device: String,
    pub node: String,
    pub rated_kva: f64,
    pub q_max_kvar: f64,
    pub peak_kw: f64,
    pub curve: DroopCurve,
    /// Wait for an irradiance publication every step instead of reading
    /// `local_irradiance`.
    pub irradiance_from_bus: bool,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            name: "converter".into(),
            device: "PV09".into(),
            node: "node21".into(),
            rated_kva: 30.0,
            q_max_kvar: 13.2,
            peak_kw: 30.0,
            curve: DroopCurve::default(),
            irradiance_from_bus: true,
        }
    }
}

/// Stepped client standing in for the hardware converter: reacts to the
/// coupling-node voltage with `(P, Q)` in generator reference.
pub struct ConverterClient {
    cfg: ConverterConfig,
    state: ConverterState,
    local_irradiance: Option<Profile>,
    irradiance: Option<(u64, f64)>,
    /// Latest coupling voltage not yet answered.
    voltage: Option<(u64, f64)>,
    pending: Option<u64>,
    answered: Option<u64>,
}

impl ConverterClient {
    pub fn new(cfg: ConverterConfig, local_irradiance: Option<Profile>) -> Result<Self, ClientError> {
        let state = ConverterState::new(cfg.rated_kva, cfg.q_max_kvar, cfg.peak_kw, &cfg.node)?;
        if !cfg.irradiance_from_bus && local_irradiance.is_none() {
            return Err(ClientError::Converter("no irradiance source".into()));
        }
        Ok(Self { cfg, state, local_irradiance, irradiance: None, voltage: None, pending: None, answered: None })
    }

    pub fn state(&self) -> &ConverterState {
        &self.state
    }

    fn irradiance_for(&self, step: u64) -> Option<f64> {
        if self.cfg.irradiance_from_bus {
            self.irradiance.filter(|&(s, _)| s == step).map(|(_, v)| v)
        } else {
            self.local_irradiance.as_ref().and_then(|p| p.at(step))
        }
    }

    /// Answers the buffered voltage once the step's irradiance is known.
    fn try_respond(&mut self, out: &mut Outbox) {
        let Some((step, u)) = self.voltage else { return };
        let Some(irradiance) = self.irradiance_for(step) else { return };
        self.voltage = None;
        let (p, q) = converter_step(&mut self.state, u, irradiance * self.cfg.peak_kw, &self.cfg.curve);
        self.publish(step, p, q, out);
        if self.pending == Some(step) && self.answered != Some(step) {
            self.answered = Some(step);
            out.step_done(step);
        }
    }

    fn publish(&mut self, step: u64, p: f64, q: f64, out: &mut Outbox) {
        let dev = self.cfg.device.to_lowercase();
        out.publish(&topics::device_pq(&dev), Some(step), json!({"p_kw": p, "q_kvar": q}));
        out.publish_number(&format!("signal/converter/{dev}/p_kw"), step, p);
        out.publish_number(&format!("signal/converter/{dev}/q_kvar"), step, q);
    }
}

impl Participant for ConverterClient {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn mode(&self) -> Mode {
        Mode::Stepped
    }

    fn subscriptions(&self) -> Vec<String> {
        let mut subs = vec![topics::coupling_voltage(&self.cfg.node)];
        if self.cfg.irradiance_from_bus {
            subs.push(topics::PROFILE_IRRADIANCE.to_string());
        }
        subs
    }

    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        match msg.t {
            MsgType::Step => {
                self.pending = msg.step;
            }
            MsgType::Publish if msg.topic.as_deref() == Some(topics::PROFILE_IRRADIANCE) => {
                if let (Some(step), Some(v)) = (msg.step, msg.number()) {
                    self.irradiance = Some((step, v));
                    self.try_respond(out);
                }
            }
            MsgType::Publish => {
                let (Some(step), Some(u)) = (msg.step, msg.number()) else {
                    return Err(BusError::client(&self.cfg.name, "coupling voltage without step or value"));
                };
                self.voltage = Some((step, u));
                self.try_respond(out);
            }
            _ => {}
        }
        Ok(())
    }

    /// No voltage this step: hold the last output and flag it.
    fn on_idle(&mut self, out: &mut Outbox) -> Result<(), BusError> {
        if let Some(step) = self.pending.filter(|&s| self.answered != Some(s)) {
            let (p, q) = (self.state.p, self.state.q);
            self.publish(step, p, q, out);
            self.answered = Some(step);
            out.step_done_with_quality(step, "stale_voltage", Some("held last output".into()));
        }
        Ok(())
    }
}
