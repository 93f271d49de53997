use super::ClientError;

/// Piecewise-linear Q(U) characteristic: per-unit voltage to a fraction of
/// `q_max`, positive = injecting (generator reference).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DroopCurve {
    knots: Vec<(f64, f64)>,
    deadband: (f64, f64),
}

impl Default for DroopCurve {
    fn default() -> Self {
        Self { knots: vec![(0.95, 1.0), (0.98, 0.0), (1.02, 0.0), (1.05, -1.0)], deadband: (0.98, 1.02) }
    }
}

impl DroopCurve {
    /// Knots must be finite, strictly increasing in voltage, with fractions
    /// in [-1, 1] that never increase; the curve must be zero across the
    /// deadband.
    pub fn new(knots: Vec<(f64, f64)>, deadband: (f64, f64)) -> Result<Self, ClientError> {
        let bad = |m: String| Err(ClientError::Droop(m));
        if knots.len() < 2 {
            return bad(format!("need at least 2 knots, got {}", knots.len()));
        }
        if knots.iter().any(|&(u, q)| !u.is_finite() || !q.is_finite() || !(-1.0..=1.0).contains(&q) || u <= 0.0) {
            return bad("knots must be finite with voltage > 0 and fraction in [-1, 1]".into());
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad(format!("knot voltages not increasing at {}", w[1].0));
            }
            if w[1].1 > w[0].1 {
                return bad(format!("curve increases between {} and {}", w[0].0, w[1].0));
            }
        }
        let (u1, u2) = deadband;
        if !(u1.is_finite() && u2.is_finite() && u1 <= u2) {
            return bad(format!("invalid deadband [{u1}, {u2}]"));
        }
        let curve = Self { knots, deadband };
        if curve.interpolate(u1) != 0.0 || curve.interpolate(u2) != 0.0 {
            return bad(format!("curve is not zero across the deadband [{u1}, {u2}]"));
        }
        Ok(curve)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn deadband(&self) -> (f64, f64) {
        self.deadband
    }

    fn interpolate(&self, u: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if u <= first.0 {
            return first.1;
        }
        if u >= last.0 {
            return last.1;
        }
        let k = self.knots.partition_point(|&(x, _)| x <= u);
        let (u0, q0) = self.knots[k - 1];
        let (u1, q1) = self.knots[k];
        q0 + (q1 - q0) * (u - u0) / (u1 - u0)
    }

    /// Fraction of `q_max` at voltage `u`, exactly zero inside the deadband.
    pub fn fraction(&self, u: f64) -> f64 {
        if u >= self.deadband.0 && u <= self.deadband.1 {
            return 0.0;
        }
        self.interpolate(u)
    }
}

/// Reactive power demanded by the curve, in the unit of `q_max`.
pub fn qu_droop(u: f64, curve: &DroopCurve, q_max: f64) -> f64 {
    let q = curve.fraction(u) * q_max;
    if q == 0.0 { 0.0 } else { q }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_curve_points() {
        let c = DroopCurve::default();
        assert_eq!(qu_droop(1.0, &c, 10.0), 0.0);
        assert_eq!(qu_droop(0.90, &c, 10.0), 10.0);
        assert_eq!(qu_droop(1.2, &c, 10.0), -10.0);
        let q = qu_droop(238.0 / 230.0, &c, 10.0);
        // (238/230 − 1.02) / 0.03 of the way to −1.
        let expected = -10.0 * (238.0 / 230.0 - 1.02) / 0.03;
        assert!(q < 0.0 && (q - expected).abs() < 1e-12, "{q} vs {expected}");
    }

    #[test]
    fn rejects_invalid_curves() {
        assert!(DroopCurve::new(vec![(1.0, 0.0)], (1.0, 1.0)).is_err());
        assert!(DroopCurve::new(vec![(1.0, 0.0), (0.9, 0.0)], (1.0, 1.0)).is_err());
        assert!(DroopCurve::new(vec![(0.9, 0.0), (1.1, 0.5)], (0.95, 1.0)).is_err());
        assert!(DroopCurve::new(vec![(0.9, 1.0), (1.1, -1.0)], (0.98, 1.02)).is_err());
        assert!(DroopCurve::new(vec![(0.9, 1.0), (0.98, 0.0), (1.1, 0.0)], (0.98, 1.05)).is_ok());
    }
}
