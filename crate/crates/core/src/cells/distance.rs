use nalgebra::DMatrix;

use super::{CellError, SensitivityMatrix};

/// Distance assigned where the attenuation product is not positive.
pub const DISTANCE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMatrix {
    pub a: DMatrix<f64>,
    pub bus_ids: Vec<String>,
    /// Off-diagonal entries outside (0, 1], reported but kept.
    pub out_of_range: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub d: DMatrix<f64>,
    pub bus_ids: Vec<String>,
    pub normalized: bool,
    /// Pairs whose attenuation product was not positive and got [`DISTANCE_CAP`].
    pub capped: Vec<(usize, usize)>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bus_ids.is_empty()
    }

    /// Elementwise `max(d_ij, d_ji)`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.d.nrows();
        DMatrix::from_fn(n, n, |i, j| self.d[(i, j)].max(self.d[(j, i)]))
    }
}

/// Column-diagonal normalization `a_ij = b_ij / b_jj`.
pub fn attenuation_matrix(s: &SensitivityMatrix) -> Result<AttenuationMatrix, CellError> {
    let n = s.b.nrows();
    for j in 0..n {
        if s.b[(j, j)] == 0.0 {
            return Err(CellError::ZeroDiagonal(s.bus_ids[j].clone()));
        }
    }
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { s.b[(i, j)] / s.b[(j, j)] });
    let mut out_of_range = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)];
            if i != j && !(x > 0.0 && x <= 1.0) {
                out_of_range.push((i, j));
            }
        }
    }
    if !out_of_range.is_empty() {
        log::debug!("{} attenuation entries fall outside (0, 1]", out_of_range.len());
    }
    Ok(AttenuationMatrix { a, bus_ids: s.bus_ids.clone(), out_of_range })
}

/// `D_ij = -ln(a_ij a_ji)`, evaluated once per unordered pair.
pub fn electrical_distance(att: &AttenuationMatrix) -> DistanceMatrix {
    let n = att.a.nrows();
    let mut d = DMatrix::zeros(n, n);
    let mut capped = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let product = att.a[(i, j)] * att.a[(j, i)];
            let dist = if product > 0.0 {
                let x = -product.ln();
                if x == 0.0 { 0.0 } else { x }
            } else {
                log::warn!(
                    "attenuation product {product} between {} and {} capped",
                    att.bus_ids[i],
                    att.bus_ids[j]
                );
                capped.push((i, j));
                DISTANCE_CAP
            };
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    DistanceMatrix { d, bus_ids: att.bus_ids.clone(), normalized: false, capped }
}

/// Divides each row by its maximum.
pub fn normalize_distance(dist: &DistanceMatrix) -> Result<DistanceMatrix, CellError> {
    let mut d = dist.d.clone();
    for (i, mut row) in d.row_iter_mut().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(CellError::ZeroRow(dist.bus_ids[i].clone()));
        }
        row.iter_mut().for_each(|x| *x /= max);
    }
    Ok(DistanceMatrix { d, bus_ids: dist.bus_ids.clone(), normalized: true, capped: dist.capped.clone() })
}
