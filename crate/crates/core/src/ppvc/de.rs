use super::rng::SplitMix64;
use super::PpvcError;

/// Control parameters of DE/rand/1/bin.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeParams {
    pub population: usize,
    /// Differential weight F.
    pub mutation: f64,
    /// Crossover rate CR.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop once `max f − min f` over the population drops below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            population: 16,
            mutation: 0.7,
            crossover: 0.9,
            max_generations: 40,
            tolerance: 1e-9,
            seed: 1,
        }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<(), PpvcError> {
        if self.population < 4 {
            return Err(PpvcError::InvalidParams(format!("population must be >= 4, got {}", self.population)));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(PpvcError::InvalidParams(format!("mutation F must be in (0, 2], got {}", self.mutation)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(PpvcError::InvalidParams(format!("crossover CR must be in [0, 1], got {}", self.crossover)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(PpvcError::InvalidParams(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Best member after one generation (generation 0 is the initial population).
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub best: Vec<f64>,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub generations: usize,
    pub converged: bool,
    pub evaluations: usize,
    pub trajectory: Vec<GenerationRecord>,
}

fn score(x: f64) -> f64 {
    if x.is_nan() { f64::INFINITY } else { x }
}

fn best_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Minimizes `objective` over the box `bounds` with DE/rand/1/bin.
///
/// The population is drawn uniformly in the box from `params.seed`; when
/// `initial` is given it replaces member 0. Each generation, for every member
/// `i` the generator draws `r1, r2, r3` (distinct, all `!= i`, by rejection),
/// then the forced crossover index, then one uniform per dimension. The
/// mutant `x_r1 + F (x_r2 - x_r3)` is clipped to the box and replaces the
/// target when its value is not worse. NaN objective values rank as `+inf`.
pub fn differential_evolution<F>(
    mut objective: F,
    bounds: &[(f64, f64)],
    params: &DeParams,
    initial: Option<&[f64]>,
) -> Result<DeResult, PpvcError>
where
    F: FnMut(&[f64]) -> f64,
{
    params.validate()?;
    if bounds.is_empty() {
        return Err(PpvcError::InvalidBounds("no decision variables".into()));
    }
    if let Some(&(lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(PpvcError::InvalidBounds(format!("invalid interval [{lo}, {hi}]")));
    }
    let dim = bounds.len();
    let np = params.population;
    let mut rng = SplitMix64::new(params.seed);

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| bounds.iter().map(|&(lo, hi)| lo + rng.next_f64() * (hi - lo)).collect())
        .collect();
    if let Some(x0) = initial {
        if x0.len() != dim || x0.iter().zip(bounds).any(|(x, (lo, hi))| !(x >= lo && x <= hi)) {
            return Err(PpvcError::InvalidBounds("initial point outside the box".into()));
        }
        population[0] = x0.to_vec();
    }
    let mut values: Vec<f64> = population.iter().map(|x| score(objective(x))).collect();
    let mut evaluations = np;

    let mut trajectory = Vec::with_capacity(params.max_generations + 1);
    let record = |pop: &[Vec<f64>], vals: &[f64], out: &mut Vec<GenerationRecord>| {
        let b = best_index(vals);
        out.push(GenerationRecord { best: pop[b].clone(), best_value: vals[b] });
    };
    record(&population, &values, &mut trajectory);

    let mut generations = 0;
    let mut converged = spread(&values) < params.tolerance;
    let mut trial = vec![0.0; dim];
    while !converged && generations < params.max_generations {
        generations += 1;
        let mut next_pop = population.clone();
        let mut next_vals = values.clone();
        for i in 0..np {
            let mut pick = |taken: &[usize]| loop {
                let r = rng.below(np);
                if !taken.contains(&r) {
                    break r;
                }
            };
            let r1 = pick(&[i]);
            let r2 = pick(&[i, r1]);
            let r3 = pick(&[i, r1, r2]);
            let forced = rng.below(dim);
            for d in 0..dim {
                let u = rng.next_f64();
                trial[d] = if u < params.crossover || d == forced {
                    let (lo, hi) = bounds[d];
                    (population[r1][d] + params.mutation * (population[r2][d] - population[r3][d])).clamp(lo, hi)
                } else {
                    population[i][d]
                };
            }
            let value = score(objective(&trial));
            evaluations += 1;
            if value <= values[i] {
                next_pop[i].copy_from_slice(&trial);
                next_vals[i] = value;
            }
        }
        population = next_pop;
        values = next_vals;
        record(&population, &values, &mut trajectory);
        converged = spread(&values) < params.tolerance;
    }

    let b = best_index(&values);
    Ok(DeResult {
        best: population[b].clone(),
        best_value: values[b],
        generations,
        converged,
        evaluations,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        let ok = DeParams::default();
        assert!(ok.validate().is_ok());
        for bad in [
            DeParams { population: 3, ..ok },
            DeParams { mutation: 0.0, ..ok },
            DeParams { mutation: 2.5, ..ok },
            DeParams { crossover: 1.1, ..ok },
            DeParams { tolerance: f64::NAN, ..ok },
        ] {
            assert!(matches!(bad.validate(), Err(PpvcError::InvalidParams(_))));
        }
    }

    #[test]
    fn rejects_empty_or_inverted_bounds() {
        let p = DeParams::default();
        assert!(differential_evolution(|_| 0.0, &[], &p, None).is_err());
        assert!(differential_evolution(|_| 0.0, &[(1.0, 0.0)], &p, None).is_err());
    }

    #[test]
    fn initial_point_is_member_zero() {
        let p = DeParams { max_generations: 0, ..DeParams::default() };
        let r = differential_evolution(|x| (x[0] - 0.25).abs(), &[(-1.0, 1.0)], &p, Some(&[0.25])).unwrap();
        assert_eq!(r.best, vec![0.25]);
        assert_eq!(r.evaluations, p.population);
    }

    #[test]
    fn degenerate_box_is_allowed() {
        let p = DeParams::default();
        let r = differential_evolution(|x| x[0] * x[0] + x[1], &[(0.5, 0.5), (-1.0, 1.0)], &p, None).unwrap();
        assert_eq!(r.best[0], 0.5);
        assert!(r.best[1] < -0.99);
    }

    #[test]
    fn sphere_three_dimensions() {
        let p = DeParams { population: 30, mutation: 0.8, crossover: 0.9, max_generations: 200, tolerance: 0.0, seed: 3 };
        let r = differential_evolution(|x| x.iter().map(|v| v * v).sum(), &[(-5.0, 5.0); 3], &p, None).unwrap();
        let norm = r.best.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn penalized_one_dimension() {
        let f = |x: &[f64]| x[0] * x[0] + 1e3 * (1.0 - x[0]).max(0.0).powi(2);
        let p = DeParams { population: 20, max_generations: 200, tolerance: 1e-12, ..DeParams::default() };
        let r = differential_evolution(f, &[(-5.0, 5.0)], &p, None).unwrap();
        // Unconstrained minimizer of x² + 1e3 (1 − x)² is 1e3 / 1001.
        assert!((r.best[0] - 1.0).abs() < 1e-2, "{:?}", r.best);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2) + (3.0 * x[0]).sin();
        let p = DeParams { seed: 42, ..DeParams::default() };
        let a = differential_evolution(f, &[(-2.0, 2.0); 2], &p, None).unwrap();
        let b = differential_evolution(f, &[(-2.0, 2.0); 2], &p, None).unwrap();
        assert_eq!(a, b);
        let bits = |r: &DeResult| r.trajectory.iter().map(|g| g.best_value.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn best_so_far_monotone_and_evaluations_in_box() {
        let bounds = [(-1.0, 2.0), (0.0, 0.5), (-3.0, -1.0)];
        let mut outside = 0;
        let f = |x: &[f64]| {
            if x.iter().zip(&bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
                outside += 1;
            }
            x.iter().map(|v| (v - 0.3).abs()).sum::<f64>()
        };
        let p = DeParams { mutation: 1.9, ..DeParams::default() };
        let r = differential_evolution(f, &bounds, &p, None).unwrap();
        assert_eq!(outside, 0);
        for w in r.trajectory.windows(2) {
            assert!(w[1].best_value <= w[0].best_value);
        }
    }
}
