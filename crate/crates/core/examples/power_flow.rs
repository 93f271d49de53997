//! Newton-Raphson power flow on the bundled benchmark feeder.

use gridlink::grid::{benchmark, to_per_unit};
use gridlink::powerflow::{solve_power_flow, DEFAULT_MAX_ITER, DEFAULT_TOL};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = benchmark::network();
    let pu = to_per_unit(&net);
    let sol = solve_power_flow(&pu, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    println!("{}: converged={} after {} iterations", net.name, sol.converged, sol.iterations);
    println!("{:>8} {:>9} {:>10}", "bus", "|V| pu", "angle deg");
    for (i, id) in pu.bus_ids.iter().enumerate() {
        println!("{id:>8} {:>9.5} {:>10.4}", sol.v[i], sol.delta[i].to_degrees());
    }
    println!("losses: {:.4} MW, V in [{:.4}, {:.4}] pu", sol.total_losses()?, sol.v_min(), sol.v_max());
    Ok(())
}
