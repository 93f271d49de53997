use std::path::{Path, PathBuf};

use super::ExperimentError;
use crate::clients::{topics, RecordStore};
use crate::numfmt::sig9;
use crate::sectioned::{self, Writer};

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

/// Outcome of one scenario, reconstructed from the recorder output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub label: String,
    pub status: RunStatus,
    pub cells: usize,
    pub steps: u64,
    pub step_seconds: f64,
    pub losses_mw: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub violations: Vec<u32>,
    /// Σ losses · step length, MWh.
    pub energy_mwh: f64,
    /// Bus-steps outside the voltage band.
    pub violation_count: u64,
    pub recorder_csv: PathBuf,
    pub config_hash: String,
    /// Hash of the profiles driving the run, for comparability checks.
    pub profiles_hash: String,
    pub out_dir: PathBuf,
}

impl ScenarioResult {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Per-step series from a recorder store; a failed run yields the steps
    /// that were recorded.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_store(
        store: &RecordStore,
        label: &str,
        cells: usize,
        steps: u64,
        step_seconds: f64,
        status: RunStatus,
        config_hash: String,
        profiles_hash: String,
        out_dir: &Path,
    ) -> Self {
        let losses_mw = store.values(topics::LOSSES);
        let violations: Vec<u32> = store.values(topics::VIOLATIONS).iter().map(|&v| v as u32).collect();
        let status = match status {
            RunStatus::Completed if losses_mw.len() as u64 != steps => {
                RunStatus::Failed(format!("{} of {steps} loss values recorded", losses_mw.len()))
            }
            s => s,
        };
        Self {
            label: label.to_string(),
            status,
            cells,
            steps,
            step_seconds,
            energy_mwh: losses_mw.iter().sum::<f64>() * step_seconds / 3600.0,
            violation_count: violations.iter().map(|&v| v as u64).sum(),
            losses_mw,
            v_min: store.values(topics::V_MIN),
            v_max: store.values(topics::V_MAX),
            violations,
            recorder_csv: out_dir.join("recorder.csv"),
            config_hash,
            profiles_hash,
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn losses_csv(&self) -> String {
        let mut s = String::from("step,losses_mw,v_min,v_max,violations\n");
        for i in 0..self.losses_mw.len() {
            let at = |v: &[f64]| v.get(i).map(|x| sig9(*x)).unwrap_or_default();
            let viol = self.violations.get(i).map(u32::to_string).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", i + 1, sig9(self.losses_mw[i]), at(&self.v_min), at(&self.v_max), viol));
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let status = match &self.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Failed(_) => "failed".to_string(),
        };
        let reason = match &self.status {
            RunStatus::Failed(r) => r.replace([',', '#', '\n'], ";"),
            RunStatus::Completed => String::new(),
        };
        let rows: Vec<Vec<String>> = vec![
            vec!["label".into(), self.label.clone()],
            vec!["status".into(), status],
            vec!["reason".into(), reason],
            vec!["cells".into(), self.cells.to_string()],
            vec!["steps".into(), self.steps.to_string()],
            vec!["step_seconds".into(), self.step_seconds.to_string()],
            vec!["energy_losses_mwh".into(), self.energy_mwh.to_string()],
            vec!["violation_count".into(), self.violation_count.to_string()],
            vec!["config_sha256".into(), self.config_hash.clone()],
            vec!["profiles_sha256".into(), self.profiles_hash.clone()],
        ];
        Writer::new().section("summary", &["key", "value"], rows).finish()
    }

    /// Writes `losses.csv` and `summary.txt` into the output directory.
    pub fn save(&self) -> Result<(), ExperimentError> {
        let dir = &self.out_dir;
        std::fs::create_dir_all(dir).map_err(ExperimentError::io(dir))?;
        let losses = dir.join("losses.csv");
        std::fs::write(&losses, self.losses_csv()).map_err(ExperimentError::io(&losses))?;
        let summary = dir.join("summary.txt");
        std::fs::write(&summary, self.summary_text()).map_err(ExperimentError::io(&summary))?;
        Ok(())
    }
}

/// Reads a result directory written by a run.
pub fn load_result(dir: impl AsRef<Path>) -> Result<ScenarioResult, ExperimentError> {
    let dir = dir.as_ref();
    let bad = |m: String| ExperimentError::Result { path: dir.display().to_string(), message: m };
    let summary_path = dir.join("summary.txt");
    let text = std::fs::read_to_string(&summary_path).map_err(ExperimentError::io(&summary_path))?;
    let doc = sectioned::parse(&text).map_err(|e| bad(e.to_string()))?;
    let summary = doc.section("summary").ok_or_else(|| bad("no [summary] section".into()))?;
    let get = |k: &str| -> Result<String, ExperimentError> {
        summary
            .value_of(k)
            .and_then(|r| r.fields.get(1).cloned())
            .ok_or_else(|| bad(format!("summary lacks {k}")))
    };
    let num = |k: &str| -> Result<f64, ExperimentError> { get(k)?.parse().map_err(|_| bad(format!("bad {k}"))) };
    let status = match get("status")?.as_str() {
        "completed" => RunStatus::Completed,
        _ => RunStatus::Failed(get("reason").unwrap_or_default()),
    };

    let losses_path = dir.join("losses.csv");
    let mut reader = csv::Reader::from_path(&losses_path).map_err(|e| bad(e.to_string()))?;
    let (mut losses, mut vmin, mut vmax, mut viol) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad(format!("losses.csv: bad value {:?}", &row[i])));
        losses.push(f(1)?);
        vmin.push(f(2)?);
        vmax.push(f(3)?);
        viol.push(row[4].parse::<u32>().map_err(|_| bad("losses.csv: bad violations".into()))?);
    }
    Ok(ScenarioResult {
        label: get("label")?,
        status,
        cells: num("cells")? as usize,
        steps: num("steps")? as u64,
        step_seconds: num("step_seconds")?,
        energy_mwh: num("energy_losses_mwh")?,
        violation_count: num("violation_count")? as u64,
        losses_mw: losses,
        v_min: vmin,
        v_max: vmax,
        violations: viol,
        recorder_csv: dir.join("recorder.csv"),
        config_hash: get("config_sha256")?,
        profiles_hash: get("profiles_sha256")?,
        out_dir: dir.to_path_buf(),
    })
}
