use nalgebra::DMatrix;

use crate::grid::{admittance_matrix, AdmittanceMatrix, PerUnitNetwork};

/// The four blocks of the power-flow Jacobian at one operating point.
///
/// Rows and columns of `j1`/`j3` (angles) follow [`Jacobian::angle_buses`]
/// (non-slack buses); rows of `j3`/`j4` and columns of `j2`/`j4` follow
/// [`Jacobian::magnitude_buses`] (PQ buses).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    /// dP/d(delta)
    pub j1: DMatrix<f64>,
    /// dP/du
    pub j2: DMatrix<f64>,
    /// dQ/d(delta)
    pub j3: DMatrix<f64>,
    /// dQ/du
    pub j4: DMatrix<f64>,
    pub angle_buses: Vec<usize>,
    pub magnitude_buses: Vec<usize>,
}

impl Jacobian {
    /// Full `[[j1, j2], [j3, j4]]` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let na = self.angle_buses.len();
        let nm = self.magnitude_buses.len();
        let mut full = DMatrix::zeros(na + nm, na + nm);
        full.view_mut((0, 0), (na, na)).copy_from(&self.j1);
        full.view_mut((0, na), (na, nm)).copy_from(&self.j2);
        full.view_mut((na, 0), (nm, na)).copy_from(&self.j3);
        full.view_mut((na, na), (nm, nm)).copy_from(&self.j4);
        full
    }
}

/// Calculated bus injections `(P, Q)` for voltages `v` at angles `delta`.
pub fn calculated_injections(y: &AdmittanceMatrix, v: &[f64], delta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let yij = y[(i, j)];
            if yij.re == 0.0 && yij.im == 0.0 {
                continue;
            }
            let (s, c) = (delta[i] - delta[j]).sin_cos();
            p[i] += v[i] * v[j] * (yij.re * c + yij.im * s);
            q[i] += v[i] * v[j] * (yij.re * s - yij.im * c);
        }
    }
    (p, q)
}

pub fn jacobian(net: &PerUnitNetwork, v: &[f64], delta: &[f64]) -> Jacobian {
    jacobian_with(&admittance_matrix(net), &net.non_slack(), &net.pq_buses(), v, delta)
}

pub(crate) fn jacobian_with(
    y: &AdmittanceMatrix,
    angle_buses: &[usize],
    magnitude_buses: &[usize],
    v: &[f64],
    delta: &[f64],
) -> Jacobian {
    let (p, q) = calculated_injections(y, v, delta);

    // Partial derivatives of P_i and Q_i w.r.t. delta_k and v_k.
    let dp_dd = |i: usize, k: usize| -> f64 {
        if i == k {
            -q[i] - y[(i, i)].im * v[i] * v[i]
        } else {
            let (s, c) = (delta[i] - delta[k]).sin_cos();
            v[i] * v[k] * (y[(i, k)].re * s - y[(i, k)].im * c)
        }
    };
    let dp_dv = |i: usize, k: usize| -> f64 {
        if i == k {
            p[i] / v[i] + y[(i, i)].re * v[i]
        } else {
            let (s, c) = (delta[i] - delta[k]).sin_cos();
            v[i] * (y[(i, k)].re * c + y[(i, k)].im * s)
        }
    };
    let dq_dd = |i: usize, k: usize| -> f64 {
        if i == k {
            p[i] - y[(i, i)].re * v[i] * v[i]
        } else {
            let (s, c) = (delta[i] - delta[k]).sin_cos();
            -v[i] * v[k] * (y[(i, k)].re * c + y[(i, k)].im * s)
        }
    };
    let dq_dv = |i: usize, k: usize| -> f64 {
        if i == k {
            q[i] / v[i] - y[(i, i)].im * v[i]
        } else {
            let (s, c) = (delta[i] - delta[k]).sin_cos();
            v[i] * (y[(i, k)].re * s - y[(i, k)].im * c)
        }
    };

    let block = |rows: &[usize], cols: &[usize], f: &dyn Fn(usize, usize) -> f64| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| f(rows[r], cols[c]))
    };

    Jacobian {
        j1: block(angle_buses, angle_buses, &dp_dd),
        j2: block(angle_buses, magnitude_buses, &dp_dv),
        j3: block(magnitude_buses, angle_buses, &dq_dd),
        j4: block(magnitude_buses, magnitude_buses, &dq_dv),
        angle_buses: angle_buses.to_vec(),
        magnitude_buses: magnitude_buses.to_vec(),
    }
}
