use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use super::state::{build_state, OperatingPoint};
use super::topics;
use crate::bus::{BusError, Message, Mode, MsgType, Outbox, Participant};
use crate::cells::CellPartition;
use crate::grid::PerUnitNetwork;
use crate::ppvc::{run_ppvc_cycle, PpvcSettings, SplitMix64};

#[derive(Debug, Clone, PartialEq)]
pub struct PpvcClientConfig {
    pub name: String,
    /// Optimize after every `cadence` grid steps.
    pub cadence: u64,
    pub settings: PpvcSettings,
    /// Per-cycle DE seeds are derived from this.
    pub seed: u64,
}

impl Default for PpvcClientConfig {
    fn default() -> Self {
        Self { name: "ppvc".into(), cadence: 15, settings: PpvcSettings::default(), seed: 1 }
    }
}

/// Outcome of one control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub step: u64,
    /// Losses published by the grid for `step`, MW.
    pub losses_before: f64,
    /// Sum over cells of the objective at the incumbent setpoints.
    pub incumbent: f64,
    /// Sum over cells of the optimized objective.
    pub objective: f64,
    pub evaluations: usize,
}

/// Free-running controller. It mirrors the grid's operating point from the
/// published signals, optimizes every cell on the cadence and publishes
/// `setpoint/<generator>/q` in MVAr.
pub struct PpvcClient {
    cfg: PpvcClientConfig,
    base: PerUnitNetwork,
    partition: CellPartition,
    signals: BTreeMap<&'static str, (u64, f64)>,
    setpoints: BTreeMap<String, f64>,
    cycles: u64,
    history: Arc<Mutex<Vec<CycleRecord>>>,
}

const MIRRORED: [&str; 4] = [topics::LOAD_SCALE, topics::PV_SCALE, topics::EXTERNAL_P, topics::EXTERNAL_Q];

impl PpvcClient {
    pub fn new(cfg: PpvcClientConfig, base: PerUnitNetwork, partition: CellPartition) -> Self {
        Self {
            cfg,
            base,
            partition,
            signals: BTreeMap::new(),
            setpoints: BTreeMap::new(),
            cycles: 0,
            history: Arc::default(),
        }
    }

    pub fn history(&self) -> Arc<Mutex<Vec<CycleRecord>>> {
        Arc::clone(&self.history)
    }

    fn signal(&self, topic: &'static str, step: u64) -> Option<f64> {
        self.signals.get(topic).filter(|&&(s, _)| s == step).map(|&(_, v)| v)
    }

    fn cycle(&mut self, step: u64, losses: f64, out: &mut Outbox) {
        let values: Option<Vec<f64>> = MIRRORED.iter().map(|t| self.signal(t, step)).collect();
        let Some(v) = values else {
            log::warn!("ppvc: incomplete grid state for step {step}, cycle skipped");
            return;
        };
        let op = OperatingPoint {
            load_scale: v[0],
            pv_scale: v[1],
            external: Some((v[2], v[3])),
            q_setpoints: self.setpoints.clone(),
        };
        let net = build_state(&self.base, &op);
        let mut settings = self.cfg.settings;
        settings.de.seed = SplitMix64::derive(self.cfg.seed, self.cycles).next_u64();
        self.cycles += 1;
        match run_ppvc_cycle(&net, &self.partition, &settings) {
            Ok((setpoints, results)) => {
                for (id, &(_, q)) in setpoints.iter() {
                    self.setpoints.insert(id.clone(), q);
                    out.publish_number(&topics::setpoint_q(id), step, q);
                }
                let record = CycleRecord {
                    step,
                    losses_before: losses,
                    incumbent: results.iter().map(|r| r.incumbent_objective).sum(),
                    objective: results.iter().map(|r| r.objective).sum(),
                    evaluations: results.iter().map(|r| r.evaluations).sum(),
                };
                out.publish_number(topics::PPVC_INCUMBENT, step, record.incumbent);
                out.publish_number(topics::PPVC_OBJECTIVE, step, record.objective);
                self.history.lock().expect("history poisoned").push(record);
            }
            Err(e) => {
                log::warn!("ppvc cycle at step {step} failed: {e}");
                out.error(format!("cycle at step {step}: {e}"));
            }
        }
    }
}

impl Participant for PpvcClient {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn mode(&self) -> Mode {
        Mode::FreeRunning
    }

    fn subscriptions(&self) -> Vec<String> {
        vec!["signal/grid/#".to_string()]
    }

    fn on_message(&mut self, msg: &Message, out: &mut Outbox) -> Result<(), BusError> {
        if msg.t != MsgType::Publish {
            return Ok(());
        }
        let (Some(topic), Some(step), Some(v)) = (msg.topic.as_deref(), msg.step, msg.number()) else {
            return Ok(());
        };
        if let Some(&t) = MIRRORED.iter().find(|&&t| t == topic) {
            self.signals.insert(t, (step, v));
        } else if topic == topics::LOSSES && self.cfg.cadence > 0 && step % self.cfg.cadence == 0 {
            self.cycle(step, v, out);
        }
        Ok(())
    }
}
