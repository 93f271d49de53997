//! Number formatting shared by the CSV writers.

/// Rounds to 9 significant digits and prints the shortest representation of
/// the rounded value (`0.5`, `0.333333333`, `1.23456789e-7`).
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let out = rounded.to_string();
    if out.len() > 16 {
        // Very large/small magnitudes: keep scientific notation compact.
        format!("{rounded:e}")
    } else if out == "-0" {
        "0".to_string()
    } else {
        out
    }
}
