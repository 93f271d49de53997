use nalgebra::DMatrix;

use super::CellError;
use crate::powerflow::Jacobian;

/// Beyond this 1-norm condition estimate the inverse is rejected.
const MAX_CONDITION: f64 = 1e12;

/// Voltage-magnitude sensitivity to reactive injection over PQ buses:
/// `b[(i, j)] = du_i / dQ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub b: DMatrix<f64>,
    pub bus_ids: Vec<String>,
    /// `‖j4 · b − I‖∞`
    pub residual: f64,
}

fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Inverts the `dQ/du` block. `all_bus_ids` is indexed by network bus index.
pub fn sensitivity_matrix(jac: &Jacobian, all_bus_ids: &[String]) -> Result<SensitivityMatrix, CellError> {
    let j4 = &jac.j4;
    let n = j4.nrows();
    let bus_ids = jac.magnitude_buses.iter().map(|&i| all_bus_ids[i].clone()).collect();
    let b = j4
        .clone()
        .lu()
        .try_inverse()
        .filter(|m| m.iter().all(|x| x.is_finite()))
        .ok_or(CellError::Singular { condition: f64::INFINITY })?;
    let condition = norm_1(j4) * norm_1(&b);
    if !(condition < MAX_CONDITION) {
        return Err(CellError::Singular { condition });
    }
    let residual = norm_inf(&(j4 * &b - DMatrix::identity(n, n)));
    Ok(SensitivityMatrix { b, bus_ids, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jac_with_j4(j4: DMatrix<f64>) -> Jacobian {
        let n = j4.nrows();
        Jacobian {
            j1: DMatrix::zeros(n, n),
            j2: DMatrix::zeros(n, n),
            j3: DMatrix::zeros(n, n),
            j4,
            angle_buses: (0..n).collect(),
            magnitude_buses: (0..n).collect(),
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("b{i}")).collect()
    }

    #[test]
    fn identity_inverts_to_identity() {
        let s = sensitivity_matrix(&jac_with_j4(DMatrix::identity(3, 3)), &ids(3)).unwrap();
        assert_eq!(s.b, DMatrix::identity(3, 3));
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn diagonal_inverse() {
        let j4 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let s = sensitivity_matrix(&jac_with_j4(j4), &ids(2)).unwrap();
        assert_eq!(s.b, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]));
    }

    #[test]
    fn singular_is_rejected() {
        let j4 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            sensitivity_matrix(&jac_with_j4(j4), &ids(2)),
            Err(CellError::Singular { .. })
        ));
        let j4 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-15]);
        assert!(matches!(
            sensitivity_matrix(&jac_with_j4(j4), &ids(2)),
            Err(CellError::Singular { .. })
        ));
    }
}
