//! Base case and three-cell control over one simulated day, then the
//! comparison of cumulative losses. Results go to `results/`.
//!
//! Usage: `cargo run --release --example day_experiment [steps]`

use gridlink::experiment::{compare_scenarios, run_experiment, write_comparison, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1440);
    let mut results = Vec::new();
    for cells in [0, 3] {
        let label = if cells == 0 { "base".to_string() } else { format!("k{cells}") };
        let mut cfg = ExperimentConfig { label: label.clone(), cells, output: format!("results/{label}").into(), ..Default::default() };
        cfg.schedule.steps = steps;
        let r = run_experiment(&cfg)?;
        println!("{label}: {:.5} MWh lost, {} band violations", r.energy_mwh, r.violation_count);
        results.push(r);
    }
    let cmp = compare_scenarios(&results)?;
    write_comparison(&cmp, "results")?;
    print!("{}", cmp.to_csv());
    Ok(())
}
