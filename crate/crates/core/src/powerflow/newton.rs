use nalgebra::DVector;
use num_complex::Complex64;

use super::jacobian::{calculated_injections, jacobian_with};
use super::{BranchFlow, PowerFlowError, PowerFlowSolution};
use crate::grid::{admittance_matrix, branch_admittance, BusKind, PerUnitNetwork};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest acceptable |ΔP| or |ΔQ| in per-unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Full Newton-Raphson from a flat start.
pub fn solve_power_flow(net: &PerUnitNetwork, tol: f64, max_iter: usize) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_power_flow_from(net, SolverOptions { tol, max_iter }, None)
}

/// Full Newton-Raphson, optionally warm-started from `(v, delta)`.
///
/// Slack and PV magnitudes are always reset to their setpoints. The slack bus
/// absorbs the residual P and Q. Non-convergence is reported through
/// [`PowerFlowSolution::converged`], not as an error.
pub fn solve_power_flow_from(
    net: &PerUnitNetwork,
    opts: SolverOptions,
    warm: Option<(&[f64], &[f64])>,
) -> Result<PowerFlowSolution, PowerFlowError> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(PowerFlowError::InvalidInput(format!("tol must be > 0, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(PowerFlowError::InvalidInput("max_iter must be >= 1".into()));
    }
    let n = net.bus_count();
    let y = admittance_matrix(net);
    let angle_buses = net.non_slack();
    let magnitude_buses = net.pq_buses();
    let (p_spec, q_spec) = net.injections();

    let (mut v, mut delta) = match warm {
        Some((v0, d0)) if v0.len() == n && d0.len() == n => (v0.to_vec(), d0.to_vec()),
        Some(_) => return Err(PowerFlowError::InvalidInput("warm start has wrong dimension".into())),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for i in 0..n {
        if let Some(vs) = net.v_set[i] {
            if net.kinds[i] != BusKind::Pq {
                v[i] = vs;
            }
        }
    }
    delta[net.slack] = 0.0;

    let na = angle_buses.len();
    let mut iterations = 0;
    let mut converged = false;
    let mut max_mismatch = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let (p, q) = calculated_injections(&y, &v, &delta);
        let mismatch: Vec<f64> = angle_buses
            .iter()
            .map(|&i| p_spec[i] - p[i])
            .chain(magnitude_buses.iter().map(|&i| q_spec[i] - q[i]))
            .collect();
        max_mismatch = mismatch.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !max_mismatch.is_finite() {
            break;
        }
        if max_mismatch <= opts.tol {
            converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let jac = jacobian_with(&y, &angle_buses, &magnitude_buses, &v, &delta).assemble();
        let step = jac
            .lu()
            .solve(&DVector::from_vec(mismatch))
            .filter(|dx| dx.iter().all(|x| x.is_finite()))
            .ok_or(PowerFlowError::SingularJacobian { iteration: iter })?;
        for (k, &i) in angle_buses.iter().enumerate() {
            delta[i] += step[k];
        }
        for (k, &i) in magnitude_buses.iter().enumerate() {
            v[i] += step[na + k];
        }
    }

    let (p_inj, q_inj) = calculated_injections(&y, &v, &delta);
    let phasor: Vec<Complex64> = v.iter().zip(&delta).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let branch_flows = net
        .branches
        .iter()
        .map(|br| {
            let (yff, yft, ytf, ytt) = branch_admittance(br);
            let (vf, vt) = (phasor[br.from], phasor[br.to]);
            let i_from = yff * vf + yft * vt;
            let i_to = ytf * vf + ytt * vt;
            let y_series = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let i_series = (vf / br.tap - vt) * y_series;
            BranchFlow {
                from: vf * i_from.conj(),
                to: vt * i_to.conj(),
                series_loss: i_series.norm_sqr() * br.r,
            }
        })
        .collect();

    if converged {
        warn_pv_limits(net, &q_inj);
    }

    Ok(PowerFlowSolution {
        v,
        delta,
        p_inj,
        q_inj,
        branch_flows,
        base_mva: net.base_mva,
        iterations,
        converged,
        max_mismatch,
    })
}

fn warn_pv_limits(net: &PerUnitNetwork, q_inj: &[f64]) {
    for (i, kind) in net.kinds.iter().enumerate() {
        if *kind != BusKind::Pv {
            continue;
        }
        let load_q: f64 = net.loads.iter().filter(|l| l.bus == i).map(|l| l.q).sum();
        let (lo, hi) = net
            .generators
            .iter()
            .filter(|g| g.bus == i)
            .fold((0.0, 0.0), |(lo, hi), g| (lo + g.q_min, hi + g.q_max));
        let required = q_inj[i] + load_q;
        if required < lo || required > hi {
            log::warn!(
                "PV bus {} needs {:.4} pu reactive generation outside [{lo:.4}, {hi:.4}]",
                net.bus_ids[i],
                required
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{benchmark, to_per_unit, PuBranch, PuLoad};

    pub(crate) fn two_bus(z: (f64, f64), load: (f64, f64)) -> PerUnitNetwork {
        PerUnitNetwork {
            name: "two-bus".into(),
            base_mva: 100.0,
            base_frequency_hz: 50.0,
            bus_ids: vec!["s".into(), "l".into()],
            kinds: vec![BusKind::Slack, BusKind::Pq],
            nominal_kv: vec![20.0, 20.0],
            v_set: vec![Some(1.0), None],
            slack: 0,
            branches: vec![PuBranch {
                id: "line".into(),
                from: 0,
                to: 1,
                r: z.0,
                x: z.1,
                b: 0.0,
                tap: 1.0,
                length_km: 1.0,
                z_base: 4.0,
            }],
            loads: vec![PuLoad { id: "ld".into(), bus: 1, p: load.0, q: load.1 }],
            generators: vec![],
        }
    }

    #[test]
    fn no_load_is_flat() {
        let sol = solve_power_flow(&two_bus((0.01, 0.1), (0.0, 0.0)), 1e-8, 30).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.v, vec![1.0, 1.0]);
        assert_eq!(sol.delta, vec![0.0, 0.0]);
        assert_eq!(sol.total_losses().unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_options() {
        let net = two_bus((0.01, 0.1), (0.5, 0.1));
        assert!(matches!(solve_power_flow(&net, 0.0, 30), Err(PowerFlowError::InvalidInput(_))));
        assert!(matches!(solve_power_flow(&net, 1e-8, 0), Err(PowerFlowError::InvalidInput(_))));
    }

    #[test]
    fn warm_start_at_solution_takes_one_check() {
        let net = to_per_unit(&benchmark::network());
        let sol = solve_power_flow(&net, 1e-8, 30).unwrap();
        let again = solve_power_flow_from(&net, SolverOptions::default(), Some((&sol.v, &sol.delta))).unwrap();
        assert!(again.converged);
        assert_eq!(again.iterations, 1);
    }

    #[test]
    fn non_convergence_is_a_state() {
        let net = two_bus((0.01, 0.1), (50.0, 20.0));
        let sol = solve_power_flow(&net, 1e-8, 30).unwrap();
        assert!(!sol.converged || sol.voltage_collapse());
        if !sol.converged {
            assert!(sol.total_losses().is_err());
        }
    }

    #[test]
    fn lossless_network_has_zero_losses() {
        let mut net = to_per_unit(&benchmark::network());
        for br in &mut net.branches {
            br.r = 0.0;
        }
        let sol = solve_power_flow(&net, 1e-10, 30).unwrap();
        assert!(sol.converged);
        assert!(sol.total_losses().unwrap().abs() <= 1e-10 * net.base_mva);
        assert_eq!(sol.series_losses().unwrap(), 0.0);
    }

    #[test]
    fn singular_jacobian_is_reported() {
        // Island without a path to the slack.
        let mut net = two_bus((0.01, 0.1), (0.1, 0.0));
        net.bus_ids.push("island".into());
        net.kinds.push(BusKind::Pq);
        net.nominal_kv.push(20.0);
        net.v_set.push(None);
        net.loads.push(PuLoad { id: "li".into(), bus: 2, p: 0.1, q: 0.0 });
        assert_eq!(
            solve_power_flow(&net, 1e-8, 30),
            Err(PowerFlowError::SingularJacobian { iteration: 1 })
        );
    }
}
