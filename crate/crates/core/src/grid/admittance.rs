use nalgebra::DMatrix;
use num_complex::Complex64;

use super::per_unit::{PerUnitNetwork, PuBranch};

pub type AdmittanceMatrix = DMatrix<Complex64>;

/// Two-port stamp `(y_ff, y_ft, y_tf, y_tt)` of a branch with the off-nominal
/// tap on the from side.
pub fn branch_admittance(br: &PuBranch) -> (Complex64, Complex64, Complex64, Complex64) {
    let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let half_shunt = Complex64::new(0.0, br.b / 2.0);
    let t = br.tap;
    (
        (y + half_shunt) / (t * t),
        -y / t,
        -y / t,
        y + half_shunt,
    )
}

pub fn admittance_matrix(net: &PerUnitNetwork) -> AdmittanceMatrix {
    let n = net.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &net.branches {
        let (yff, yft, ytf, ytt) = branch_admittance(br);
        y[(br.from, br.from)] += yff;
        y[(br.from, br.to)] += yft;
        y[(br.to, br.from)] += ytf;
        y[(br.to, br.to)] += ytt;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{benchmark, modify_line_length, to_per_unit, BusKind};

    fn toy(branches: Vec<(f64, f64)>) -> PerUnitNetwork {
        PerUnitNetwork {
            name: "toy".into(),
            base_mva: 100.0,
            base_frequency_hz: 50.0,
            bus_ids: vec!["a".into(), "b".into()],
            kinds: vec![BusKind::Slack, BusKind::Pq],
            nominal_kv: vec![20.0, 20.0],
            v_set: vec![Some(1.0), None],
            slack: 0,
            branches: branches
                .into_iter()
                .enumerate()
                .map(|(i, (r, x))| PuBranch {
                    id: format!("l{i}"),
                    from: 0,
                    to: 1,
                    r,
                    x,
                    b: 0.0,
                    tap: 1.0,
                    length_km: 1.0,
                    z_base: 4.0,
                })
                .collect(),
            loads: vec![],
            generators: vec![],
        }
    }

    #[test]
    fn single_branch_stamp() {
        let y = admittance_matrix(&toy(vec![(0.25, 0.5)]));
        let yb = Complex64::new(1.0, 0.0) / Complex64::new(0.25, 0.5);
        assert_eq!(y[(0, 0)], yb);
        assert_eq!(y[(1, 1)], yb);
        assert_eq!(y[(0, 1)], -yb);
        assert_eq!(y[(1, 0)], -yb);
    }

    #[test]
    fn parallel_branches_superpose() {
        let y = admittance_matrix(&toy(vec![(0.25, 0.5), (0.1, 0.3)]));
        let y1 = Complex64::new(1.0, 0.0) / Complex64::new(0.25, 0.5);
        let y2 = Complex64::new(1.0, 0.0) / Complex64::new(0.1, 0.3);
        assert!((y[(0, 1)] + (y1 + y2)).norm() < 1e-15);
    }

    #[test]
    fn benchmark_sparsity_and_symmetry() {
        let net = to_per_unit(&benchmark::network());
        let y = admittance_matrix(&net);
        let n = net.bus_count();
        let mut adjacent = vec![vec![false; n]; n];
        for br in &net.branches {
            adjacent[br.from][br.to] = true;
            adjacent[br.to][br.from] = true;
        }
        let untapped = net.branches.iter().all(|b| b.tap == 1.0);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(y[(i, j)] != Complex64::new(0.0, 0.0), adjacent[i][j], "({i},{j})");
                    if untapped {
                        assert!((y[(i, j)] - y[(j, i)]).norm() <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn row_sums_equal_shunts() {
        let net = to_per_unit(&benchmark::network());
        let y = admittance_matrix(&net);
        let mut shunt = vec![Complex64::new(0.0, 0.0); net.bus_count()];
        for br in net.branches.iter().filter(|b| b.tap == 1.0) {
            shunt[br.from] += Complex64::new(0.0, br.b / 2.0);
            shunt[br.to] += Complex64::new(0.0, br.b / 2.0);
        }
        for i in 0..net.bus_count() {
            if net.branches.iter().any(|b| b.tap != 1.0 && (b.from == i || b.to == i)) {
                continue;
            }
            let sum: Complex64 = y.row(i).iter().sum();
            assert!((sum - shunt[i]).norm() < 1e-9, "bus {i}");
        }
    }

    #[test]
    fn line_modification_touches_one_stamp() {
        let base = benchmark::network();
        let modified = modify_line_length(&base, "line1", 0.8).unwrap();
        let (a, b) = (to_per_unit(&base), to_per_unit(&modified));
        for (x, y) in a.branches.iter().zip(&b.branches) {
            if x.id == "line1" {
                assert_ne!(branch_admittance(x), branch_admittance(y));
            } else {
                assert_eq!(branch_admittance(x), branch_admittance(y));
            }
        }
    }
}
