use super::de::{differential_evolution, DeParams};
use super::rng::SplitMix64;
use super::PpvcError;
use crate::cells::CellPartition;
use crate::grid::PerUnitNetwork;
use crate::powerflow::{solve_power_flow_from, Setpoints, SolverOptions};

/// Objective returned when the candidate's power flow does not converge.
pub const NON_CONVERGED_OBJECTIVE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VoltageBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for VoltageBand {
    fn default() -> Self {
        Self { lo: 0.95, hi: 1.05 }
    }
}

impl VoltageBand {
    pub fn validate(&self) -> Result<(), PpvcError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi {
            Ok(())
        } else {
            Err(PpvcError::InvalidBand { lo: self.lo, hi: self.hi })
        }
    }

    /// Distance outside the band, zero inside.
    pub fn violation(&self, v: f64) -> f64 {
        (v - self.hi).max(self.lo - v).max(0.0)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.violation(v) == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpvcSettings {
    pub band: VoltageBand,
    /// MW per pu² of band violation.
    pub penalty_weight: f64,
    pub de: DeParams,
}

impl Default for PpvcSettings {
    fn default() -> Self {
        Self { band: VoltageBand::default(), penalty_weight: 1e4, de: DeParams::default() }
    }
}

/// `weight · Σ max(0, v − hi, lo − v)²`
pub fn voltage_penalty(voltages: impl IntoIterator<Item = f64>, band: &VoltageBand, weight: f64) -> f64 {
    weight * voltages.into_iter().map(|v| band.violation(v).powi(2)).sum::<f64>()
}

/// Decision problem of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PpvcProblem {
    pub cell: usize,
    /// Device ids, in the order of the decision vector.
    pub devices: Vec<String>,
    /// Reactive bounds per device, MVAr.
    pub bounds: Vec<(f64, f64)>,
    pub band: VoltageBand,
    pub penalty_weight: f64,
    /// Generator indices into the per-unit network.
    generator_index: Vec<usize>,
    /// Bus indices whose voltages are penalized.
    monitored: Vec<usize>,
}

impl PpvcProblem {
    pub fn new(
        net: &PerUnitNetwork,
        partition: &CellPartition,
        cell: usize,
        band: VoltageBand,
        penalty_weight: f64,
    ) -> Result<Self, PpvcError> {
        band.validate()?;
        if cell >= partition.k {
            return Err(PpvcError::UnknownCell(cell));
        }
        let devices = partition.devices[cell].clone();
        let mut generator_index = Vec::with_capacity(devices.len());
        let mut bounds = Vec::with_capacity(devices.len());
        for id in &devices {
            let g = net
                .generator_index(id)
                .ok_or_else(|| crate::powerflow::PowerFlowError::UnknownGenerator(id.clone()))?;
            let gen = &net.generators[g];
            generator_index.push(g);
            bounds.push((gen.q_min * net.base_mva, gen.q_max * net.base_mva));
        }
        let monitored = partition
            .clustered_members(cell)
            .iter()
            .filter_map(|b| net.bus_index(b))
            .collect();
        Ok(Self { cell, devices, bounds, band, penalty_weight, generator_index, monitored })
    }

    /// Current reactive setpoints of the cell's devices in `net`, MVAr,
    /// clamped into the bounds.
    pub fn current(&self, net: &PerUnitNetwork) -> Vec<f64> {
        self.generator_index
            .iter()
            .zip(&self.bounds)
            .map(|(&g, &(lo, hi))| (net.generators[g].q * net.base_mva).clamp(lo, hi))
            .collect()
    }

    fn check(&self, candidate: &[f64]) -> Result<(), PpvcError> {
        if candidate.len() != self.devices.len() {
            return Err(PpvcError::CandidateLength { expected: self.devices.len(), got: candidate.len() });
        }
        for ((&q, &(lo, hi)), id) in candidate.iter().zip(&self.bounds).zip(&self.devices) {
            if !(q >= lo && q <= hi) {
                return Err(PpvcError::CandidateOutOfBounds { device: id.clone(), value: q, lo, hi });
            }
        }
        Ok(())
    }
}

/// Reentrant evaluator: every call works on its own network copy.
#[derive(Debug, Clone)]
pub struct CellObjective<'a> {
    pub net: &'a PerUnitNetwork,
    pub problem: PpvcProblem,
    warm: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> CellObjective<'a> {
    pub fn new(net: &'a PerUnitNetwork, problem: PpvcProblem) -> Self {
        Self { net, problem, warm: None }
    }

    pub fn with_warm_start(mut self, v: Vec<f64>, delta: Vec<f64>) -> Self {
        self.warm = Some((v, delta));
        self
    }

    /// Losses in MW plus penalty; the sentinel when the flow diverges.
    pub fn evaluate(&self, candidate_q: &[f64]) -> f64 {
        let mut net = self.net.clone();
        for (&g, &q) in self.problem.generator_index.iter().zip(candidate_q) {
            net.generators[g].q = q / net.base_mva;
        }
        let warm = self.warm.as_ref().map(|(v, d)| (v.as_slice(), d.as_slice()));
        let sol = match solve_power_flow_from(&net, SolverOptions::default(), warm) {
            Ok(sol) if sol.converged => sol,
            _ => return NON_CONVERGED_OBJECTIVE,
        };
        let losses = sol.total_losses().unwrap_or(NON_CONVERGED_OBJECTIVE);
        let penalty = voltage_penalty(
            self.problem.monitored.iter().map(|&b| sol.v[b]),
            &self.problem.band,
            self.problem.penalty_weight,
        );
        losses + penalty
    }
}

/// Objective of one cell's candidate reactive setpoints (MVAr) against the
/// current state `net`.
pub fn ppvc_objective(
    net: &PerUnitNetwork,
    partition: &CellPartition,
    cell: usize,
    candidate_q: &[f64],
    settings: &PpvcSettings,
) -> Result<f64, PpvcError> {
    let problem = PpvcProblem::new(net, partition, cell, settings.band, settings.penalty_weight)?;
    problem.check(candidate_q)?;
    Ok(CellObjective::new(net, problem).evaluate(candidate_q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub cell: usize,
    pub devices: Vec<String>,
    /// MVAr, within the device bounds.
    pub best_q: Vec<f64>,
    /// Objective at `best_q` (MW + penalty).
    pub objective: f64,
    /// Objective at the setpoints in force before the cycle.
    pub incumbent_objective: f64,
    pub generations: usize,
    pub converged: bool,
    pub evaluations: usize,
}

/// One control cycle: every cell is optimized independently against `net`
/// with the other cells' setpoints frozen, then the dispatches are merged.
///
/// Each cell's DE run is seeded from `settings.de.seed` and the cell index,
/// and starts with the incumbent setpoints as one population member.
/// Returns setpoints `(p MW, q MVAr)` for every dispatched device.
pub fn run_ppvc_cycle(
    net: &PerUnitNetwork,
    partition: &CellPartition,
    settings: &PpvcSettings,
) -> Result<(Setpoints, Vec<DispatchResult>), PpvcError> {
    settings.de.validate()?;
    if let Some(cell) = partition.devices.iter().position(Vec::is_empty) {
        return Err(PpvcError::NoDevices(cell));
    }
    let base = solve_power_flow_from(net, SolverOptions::default(), None)?;
    if !base.converged {
        return Err(PpvcError::BaseCase);
    }

    let problems = (0..partition.k)
        .map(|cell| PpvcProblem::new(net, partition, cell, settings.band, settings.penalty_weight))
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Result<DispatchResult, PpvcError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = problems
            .into_iter()
            .map(|problem| {
                let (v, d) = (base.v.clone(), base.delta.clone());
                scope.spawn(move || {
                    let cell = problem.cell;
                    let incumbent = problem.current(net);
                    let bounds = problem.bounds.clone();
                    let devices = problem.devices.clone();
                    let eval = CellObjective::new(net, problem).with_warm_start(v, d);
                    let mut params = settings.de;
                    params.seed = SplitMix64::derive(settings.de.seed, cell as u64).next_u64();
                    let incumbent_objective = eval.evaluate(&incumbent);
                    let de = differential_evolution(|q| eval.evaluate(q), &bounds, &params, Some(&incumbent))?;
                    Ok(DispatchResult {
                        cell,
                        devices,
                        best_q: de.best,
                        objective: de.best_value,
                        incumbent_objective,
                        generations: de.generations,
                        converged: de.converged,
                        evaluations: de.evaluations,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("cell optimizer panicked")).collect()
    });

    let mut setpoints = Setpoints::new();
    let mut dispatches = Vec::with_capacity(results.len());
    for result in results {
        let r = result?;
        for (id, &q) in r.devices.iter().zip(&r.best_q) {
            let g = net.generator_index(id).expect("device exists");
            setpoints.insert(id.clone(), net.generators[g].p * net.base_mva, q);
        }
        dispatches.push(r);
    }
    Ok((setpoints, dispatches))
}
