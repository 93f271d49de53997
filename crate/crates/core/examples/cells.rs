//! Electrical distances and K-cell partitions of the benchmark, before and
//! after the weak-coupling line changes. Writes heat maps to `cells/`.

use gridlink::experiment::cells_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let report = cells_report(None, k, true, "cells")?;
    print!("{}", report.summary());
    Ok(())
}
