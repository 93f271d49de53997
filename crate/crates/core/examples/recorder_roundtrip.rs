//! Recorder store: append, export to CSV and read back.

use gridlink::clients::RecordStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = RecordStore::new();
    for step in 1..=5 {
        store.append("signal/grid/losses_mw", step, step * 60_000, 0.04 + 0.001 * step as f64)?;
        store.append("signal/grid/v_min", step, step * 60_000, 0.97 - 0.002 * step as f64)?;
    }
    let path = std::env::temp_dir().join("gridlink_recorder_example.csv");
    store.export_csv(&path)?;
    let back = RecordStore::import_csv(&path)?;
    print!("{}", std::fs::read_to_string(&path)?);
    println!("round trip equal: {}", back == store);
    Ok(())
}
