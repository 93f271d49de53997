//! Q(U) droop response of the simulated converter across a voltage sweep.

use gridlink::clients::{converter_step, ConverterState, DroopCurve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curve = DroopCurve::default();
    let mut state = ConverterState::new(30.0, 13.2, 30.0, "node21")?;
    println!("{:>6} {:>9} {:>9}", "u pu", "P kW", "Q kVAr");
    for i in 0..=12 {
        let u = 0.94 + 0.01 * i as f64;
        let (p, q) = converter_step(&mut state, u, 30.0, &curve);
        println!("{u:>6.2} {p:>9.3} {q:>9.3}");
    }
    Ok(())
}
