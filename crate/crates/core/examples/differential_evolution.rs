//! DE/rand/1/bin on the Rosenbrock function in two dimensions.

use gridlink::ppvc::{differential_evolution, DeParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rosenbrock = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let params = DeParams { population: 40, max_generations: 400, tolerance: 0.0, seed: 7, ..DeParams::default() };
    let r = differential_evolution(rosenbrock, &[(-2.0, 2.0), (-1.0, 3.0)], &params, None)?;
    for (g, rec) in r.trajectory.iter().enumerate().step_by(50) {
        println!("generation {g:>3}: best {:.3e}", rec.best_value);
    }
    println!("minimum {:.3e} at ({:.5}, {:.5}), {} evaluations", r.best_value, r.best[0], r.best[1], r.evaluations);
    Ok(())
}
