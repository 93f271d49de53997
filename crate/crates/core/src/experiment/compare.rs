use std::path::{Path, PathBuf};

use super::{ExperimentError, ScenarioResult};
use crate::numfmt::sig9;
use crate::plot;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub cells: usize,
    pub energy_mwh: f64,
    /// Energy relative to the base case.
    pub normalized: f64,
    pub violation_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub base_label: String,
    /// Rows ordered by cell count, the base case first.
    pub rows: Vec<ComparisonRow>,
    /// Energy never rises as the number of cells grows.
    pub non_increasing: bool,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,cells,energy_losses_mwh,normalized,violation_count\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label,
                r.cells,
                sig9(r.energy_mwh),
                sig9(r.normalized),
                r.violation_count
            ));
        }
        s
    }
}

/// Normalizes every scenario against the base case: the first result
/// without control, or the first result if all are controlled. All results
/// must have completed over the same schedule and profiles.
pub fn compare_scenarios(results: &[ScenarioResult]) -> Result<Comparison, ExperimentError> {
    let fail = |m: String| Err(ExperimentError::Compare(m));
    let Some(first) = results.first() else {
        return fail("no results given".into());
    };
    for r in results {
        if !r.completed() {
            return fail(format!("{} did not complete", r.label));
        }
        if r.steps != first.steps || r.step_seconds != first.step_seconds {
            return fail(format!("{} and {} use different schedules", first.label, r.label));
        }
        if r.profiles_hash != first.profiles_hash {
            return fail(format!("{} and {} use different profiles", first.label, r.label));
        }
    }
    let base = results.iter().find(|r| r.cells == 0).unwrap_or(first);
    if !(base.energy_mwh > 0.0) {
        return fail(format!("base case {} has no losses", base.label));
    }
    let mut rows: Vec<ComparisonRow> = results
        .iter()
        .map(|r| ComparisonRow {
            label: r.label.clone(),
            cells: r.cells,
            energy_mwh: r.energy_mwh,
            normalized: r.energy_mwh / base.energy_mwh,
            violation_count: r.violation_count,
        })
        .collect();
    rows.sort_by_key(|r| r.cells);
    let non_increasing = rows.windows(2).all(|w| w[1].energy_mwh <= w[0].energy_mwh);
    Ok(Comparison { base_label: base.label.clone(), rows, non_increasing })
}

/// Writes `comparison.csv` and a bar chart `comparison.svg`.
pub fn write_comparison(c: &Comparison, out_dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(ExperimentError::io(dir))?;
    let csv = dir.join("comparison.csv");
    std::fs::write(&csv, c.to_csv()).map_err(ExperimentError::io(&csv))?;
    let bars: Vec<(String, f64)> = c.rows.iter().map(|r| (r.label.clone(), r.normalized)).collect();
    let svg = dir.join("comparison.svg");
    let text = plot::bar_chart("Energy losses relative to the base case", "normalized losses", &bars);
    std::fs::write(&svg, text).map_err(ExperimentError::io(&svg))?;
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::RunStatus;

    fn result(label: &str, cells: usize, energy: f64) -> ScenarioResult {
        ScenarioResult {
            label: label.into(),
            status: RunStatus::Completed,
            cells,
            steps: 4,
            step_seconds: 60.0,
            losses_mw: vec![],
            v_min: vec![],
            v_max: vec![],
            violations: vec![],
            energy_mwh: energy,
            violation_count: 0,
            recorder_csv: PathBuf::new(),
            config_hash: String::new(),
            profiles_hash: "p".into(),
            out_dir: PathBuf::new(),
        }
    }

    #[test]
    fn base_is_the_uncontrolled_run() {
        let c = compare_scenarios(&[result("k2", 2, 0.6), result("base", 0, 1.2), result("k1", 1, 0.9)]).unwrap();
        assert_eq!(c.base_label, "base");
        let norm: Vec<f64> = c.rows.iter().map(|r| r.normalized).collect();
        assert_eq!(norm, vec![1.0, 0.75, 0.5]);
        assert!(c.non_increasing);
    }

    #[test]
    fn rising_losses_are_flagged() {
        let c = compare_scenarios(&[result("base", 0, 1.0), result("k1", 1, 0.8), result("k2", 2, 0.9)]).unwrap();
        assert!(!c.non_increasing);
    }

    #[test]
    fn incompatible_results_are_refused() {
        let mut other = result("k1", 1, 0.5);
        other.profiles_hash = "q".into();
        assert!(compare_scenarios(&[result("base", 0, 1.0), other]).is_err());
        let mut failed = result("k1", 1, 0.5);
        failed.status = RunStatus::Failed("x".into());
        assert!(compare_scenarios(&[result("base", 0, 1.0), failed]).is_err());
        let mut short = result("k1", 1, 0.5);
        short.steps = 3;
        assert!(compare_scenarios(&[result("base", 0, 1.0), short]).is_err());
        assert!(compare_scenarios(&[]).is_err());
    }

    #[test]
    fn writes_csv_and_chart() {
        let tmp = tempfile::tempdir().unwrap();
        let c = compare_scenarios(&[result("base", 0, 2.0), result("k1", 1, 1.0)]).unwrap();
        let (csv, svg) = write_comparison(&c, tmp.path()).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "k1,1,1,0.5,0");
        assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
    }
}
