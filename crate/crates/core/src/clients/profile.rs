use std::path::Path;

use super::ClientError;
use crate::numfmt::sig9;

pub const IRRADIANCE_TEXT: &str = include_str!("../../data/irradiance_1440.csv");
pub const LOAD_TEXT: &str = include_str!("../../data/residential_load_1440.csv");

/// Step-indexed series; `values[0]` belongs to step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub name: String,
    pub step_seconds: f64,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(name: &str, step_seconds: f64, values: Vec<f64>) -> Result<Self, ClientError> {
        if !(step_seconds > 0.0 && step_seconds.is_finite()) {
            return Err(ClientError::Profile(format!("{name}: step_seconds must be > 0")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClientError::Profile(format!("{name}: non-finite value at step {}", i + 1)));
        }
        Ok(Self { name: name.to_string(), step_seconds, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a 1-based step.
    pub fn at(&self, step: u64) -> Option<f64> {
        step.checked_sub(1).and_then(|i| self.values.get(i as usize)).copied()
    }

    /// Parses `step,value` rows numbered 1..N, with the step size declared
    /// in a `# step_seconds=<s>` line.
    pub fn parse(name: &str, text: &str) -> Result<Self, ClientError> {
        let err = |line: usize, m: &str| ClientError::Profile(format!("{name}: line {line}: {m}"));
        let mut step_seconds = None;
        let mut header = false;
        let mut values = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let n = n + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("step_seconds=") {
                    step_seconds = Some(v.trim().parse::<f64>().map_err(|_| err(n, "bad step_seconds"))?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !header {
                if line.replace(' ', "") != "step,value" {
                    return Err(err(n, "expected header `step,value`"));
                }
                header = true;
                continue;
            }
            let (s, v) = line.split_once(',').ok_or_else(|| err(n, "expected two fields"))?;
            let step: usize = s.trim().parse().map_err(|_| err(n, "bad step"))?;
            if step != values.len() + 1 {
                return Err(err(n, &format!("expected step {}, found {step}", values.len() + 1)));
            }
            values.push(v.trim().parse::<f64>().map_err(|_| err(n, "bad value"))?);
        }
        let step_seconds = step_seconds.ok_or_else(|| ClientError::Profile(format!("{name}: missing step_seconds")))?;
        Self::new(name, step_seconds, values)
    }

    pub fn load(name: &str, path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Profile(format!("{}: {e}", path.display())))?;
        Self::parse(name, &text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# step_seconds={}\nstep,value\n", self.step_seconds);
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, sig9(*v)));
        }
        s
    }

    /// Bundled clear-sky irradiance, per-unit of peak, one day at 60 s.
    pub fn default_irradiance() -> Self {
        Self::parse("irradiance", IRRADIANCE_TEXT).expect("bundled profile parses")
    }

    /// Bundled residential load multiplier, one day at 60 s.
    pub fn default_load() -> Self {
        Self::parse("load", LOAD_TEXT).expect("bundled profile parses")
    }
}
