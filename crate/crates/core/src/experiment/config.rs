use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ConfigError;
use crate::bus::{Mode, Pacing, Schedule, DEFAULT_PORT};
use crate::clients::{DroopCurve, Profile};
use crate::grid::{apply_weak_coupling_modifications, benchmark, parse_network, Network};
use crate::ppvc::{DeParams, VoltageBand};
use crate::sectioned::{self, Record, Section, Writer};

/// Where a network or profile comes from: the bundled copy or a file,
/// relative paths being resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Builtin,
    File(PathBuf),
}

impl Source {
    fn parse(text: &str) -> Self {
        if text == "builtin" { Source::Builtin } else { Source::File(PathBuf::from(text)) }
    }

    fn render(&self) -> String {
        match self {
            Source::Builtin => "builtin".into(),
            Source::File(p) => p.display().to_string(),
        }
    }

    fn resolve(&self, base_dir: &Path) -> Option<PathBuf> {
        match self {
            Source::Builtin => None,
            Source::File(p) if p.is_absolute() => Some(p.clone()),
            Source::File(p) => Some(base_dir.join(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Grid,
    Converter,
    Player,
    Recorder,
    Ppvc,
}

impl Role {
    pub fn mode(self) -> Mode {
        match self {
            Role::Grid | Role::Converter | Role::Player => Mode::Stepped,
            Role::Recorder | Role::Ppvc => Mode::FreeRunning,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Role::Grid => "grid",
            Role::Converter => "converter",
            Role::Player => "player",
            Role::Recorder => "recorder",
            Role::Ppvc => "ppvc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "grid" => Role::Grid,
            "converter" => Role::Converter,
            "player" => Role::Player,
            "recorder" => Role::Recorder,
            "ppvc" => Role::Ppvc,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSpec {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// Single-threaded deterministic scheduler.
    Local,
    /// One thread per client over in-process channels.
    Threads,
    /// TCP broker with clients in threads of this process.
    Tcp,
    /// TCP broker with every client in its own OS process.
    Spawn,
}

impl Transport {
    fn as_str(self) -> &'static str {
        match self {
            Transport::Local => "local",
            Transport::Threads => "threads",
            Transport::Tcp => "tcp",
            Transport::Spawn => "spawn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterSettings {
    pub device: String,
    pub node: String,
    pub rated_kva: f64,
    pub q_max_kvar: f64,
    pub peak_kw: f64,
}

impl Default for ConverterSettings {
    fn default() -> Self {
        Self { device: "PV09".into(), node: "node21".into(), rated_kva: 30.0, q_max_kvar: 13.2, peak_kw: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub network: Source,
    /// Apply the three weak-coupling line-length changes.
    pub modified_lines: bool,
    pub load_profile: Source,
    pub irradiance_profile: Source,
    pub schedule: Schedule,
    pub pacing: Pacing,
    pub transport: Transport,
    pub port: u16,
    pub idle_ms: u64,
    pub abort_on_fault: bool,
    pub clients: Vec<ClientSpec>,
    /// Number of cells; 0 is the uncontrolled base case.
    pub cells: usize,
    pub cadence: u64,
    pub de: DeParams,
    pub band: VoltageBand,
    pub penalty_weight: f64,
    pub droop: DroopCurve,
    pub converter: ConverterSettings,
    pub relaxation_iterations: usize,
    pub relaxation_tol: f64,
    pub output: PathBuf,
    pub seed: u64,
    /// Directory relative sources are resolved against; not part of the
    /// snapshot.
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let clients = [
            ("grid", Role::Grid),
            ("converter", Role::Converter),
            ("player", Role::Player),
            ("recorder", Role::Recorder),
            ("ppvc", Role::Ppvc),
        ]
        .into_iter()
        .map(|(name, role)| ClientSpec { name: name.into(), role })
        .collect();
        Self {
            label: "k3".into(),
            network: Source::Builtin,
            modified_lines: true,
            load_profile: Source::Builtin,
            irradiance_profile: Source::Builtin,
            schedule: Schedule::default(),
            pacing: Pacing::Fast,
            transport: Transport::Local,
            port: DEFAULT_PORT,
            idle_ms: 500,
            abort_on_fault: true,
            clients,
            cells: 3,
            cadence: 15,
            de: DeParams::default(),
            band: VoltageBand::default(),
            penalty_weight: 1e4,
            droop: DroopCurve::default(),
            converter: ConverterSettings::default(),
            relaxation_iterations: 0,
            relaxation_tol: 1e-6,
            output: PathBuf::from("results"),
            seed: 1,
            base_dir: PathBuf::from("."),
        }
    }
}

fn field_err(rec: &Record, i: usize, message: String) -> ConfigError {
    ConfigError::Field { line: rec.line, column: rec.columns.get(i).copied().unwrap_or(1), message }
}

/// `key,value` section with every key checked against `known`.
struct KeyValues<'a> {
    entries: BTreeMap<&'a str, &'a Record>,
}

impl<'a> KeyValues<'a> {
    fn new(section: &'a Section, known: &[&str]) -> Result<Self, ConfigError> {
        if section.header != ["key", "value"] {
            return Err(ConfigError::Field {
                line: section.line,
                column: 1,
                message: format!("[{}] needs header key,value", section.name),
            });
        }
        let mut entries = BTreeMap::new();
        for rec in &section.records {
            let key = rec.fields[0].as_str();
            if !known.contains(&key) {
                return Err(field_err(rec, 0, format!("unknown key {key:?} in [{}]", section.name)));
            }
            if entries.insert(key, rec).is_some() {
                return Err(field_err(rec, 0, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.entries.get(key).map(|r| r.fields[1].as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, target: &mut T) -> Result<(), ConfigError> {
        if let Some(rec) = self.entries.get(key) {
            *target = rec.fields[1]
                .parse()
                .map_err(|_| field_err(rec, 1, format!("{key}: cannot parse {:?}", rec.fields[1])))?;
        }
        Ok(())
    }

    fn number(&self, key: &str, target: &mut f64) -> Result<(), ConfigError> {
        self.parse(key, target)?;
        if let Some(rec) = self.entries.get(key) {
            if !target.is_finite() {
                return Err(field_err(rec, 1, format!("{key}: must be finite")));
            }
        }
        Ok(())
    }
}

const EXPERIMENT_KEYS: &[&str] = &[
    "format",
    "label",
    "network",
    "modified_lines",
    "load_profile",
    "irradiance_profile",
    "steps",
    "step_seconds",
    "pacing",
    "speedup",
    "transport",
    "port",
    "idle_ms",
    "abort_on_fault",
    "cells",
    "cadence",
    "relaxation_iterations",
    "relaxation_tol",
    "output",
    "seed",
];
const OPTIMIZER_KEYS: &[&str] = &["population", "mutation", "crossover", "max_generations", "tolerance"];
const BAND_KEYS: &[&str] = &["v_lo", "v_hi", "penalty_weight"];
const CONVERTER_KEYS: &[&str] =
    &["device", "node", "rated_kva", "q_max_kvar", "peak_kw", "deadband_lo", "deadband_hi"];

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base_dir)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let doc = sectioned::parse(text)?;
        let known = ["experiment", "clients", "optimizer", "band", "converter", "droop"];
        if let Some(s) = doc.sections.iter().find(|s| !known.contains(&s.name.as_str())) {
            return Err(ConfigError::Field { line: s.line, column: 1, message: format!("unknown section [{}]", s.name) });
        }
        let mut cfg = Self { base_dir: base_dir.to_path_buf(), ..Self::default() };

        let exp = doc.section("experiment").ok_or(ConfigError::MissingSection("experiment"))?;
        let kv = KeyValues::new(exp, EXPERIMENT_KEYS)?;
        if kv.text("format") != Some("1") {
            return Err(ConfigError::Invalid("[experiment] format must be 1".into()));
        }
        if let Some(v) = kv.text("label") {
            cfg.label = v.to_string();
        }
        for (key, target) in [
            ("network", &mut cfg.network),
            ("load_profile", &mut cfg.load_profile),
            ("irradiance_profile", &mut cfg.irradiance_profile),
        ] {
            if let Some(v) = kv.text(key) {
                *target = Source::parse(v);
            }
        }
        kv.parse("modified_lines", &mut cfg.modified_lines)?;
        kv.parse("steps", &mut cfg.schedule.steps)?;
        kv.number("step_seconds", &mut cfg.schedule.step_seconds)?;
        let mut speedup = 1.0;
        kv.number("speedup", &mut speedup)?;
        cfg.pacing = match kv.text("pacing").unwrap_or("fast") {
            "fast" => Pacing::Fast,
            "paced" => Pacing::Paced { speedup },
            other => return Err(ConfigError::Invalid(format!("pacing must be fast or paced, got {other:?}"))),
        };
        cfg.transport = match kv.text("transport").unwrap_or("local") {
            "local" => Transport::Local,
            "threads" => Transport::Threads,
            "tcp" => Transport::Tcp,
            "spawn" => Transport::Spawn,
            other => return Err(ConfigError::Invalid(format!("unknown transport {other:?}"))),
        };
        kv.parse("port", &mut cfg.port)?;
        kv.parse("idle_ms", &mut cfg.idle_ms)?;
        kv.parse("abort_on_fault", &mut cfg.abort_on_fault)?;
        kv.parse("cells", &mut cfg.cells)?;
        kv.parse("cadence", &mut cfg.cadence)?;
        kv.parse("relaxation_iterations", &mut cfg.relaxation_iterations)?;
        kv.number("relaxation_tol", &mut cfg.relaxation_tol)?;
        if let Some(v) = kv.text("output") {
            cfg.output = PathBuf::from(v);
        }
        kv.parse("seed", &mut cfg.seed)?;

        if let Some(section) = doc.section("clients") {
            let (Some(n), Some(r)) = (section.column("name"), section.column("role")) else {
                return Err(ConfigError::Field { line: section.line, column: 1, message: "[clients] needs name,role".into() });
            };
            let mode_col = section.column("mode");
            cfg.clients.clear();
            for rec in &section.records {
                let role = Role::parse(&rec.fields[r])
                    .ok_or_else(|| field_err(rec, r, format!("unknown role {:?}", rec.fields[r])))?;
                if let Some(m) = mode_col {
                    if rec.fields[m] != role.mode().to_string() {
                        return Err(field_err(rec, m, format!("role {} runs {}", role.as_str(), role.mode())));
                    }
                }
                cfg.clients.push(ClientSpec { name: rec.fields[n].clone(), role });
            }
        }
        if let Some(section) = doc.section("optimizer") {
            let kv = KeyValues::new(section, OPTIMIZER_KEYS)?;
            kv.parse("population", &mut cfg.de.population)?;
            kv.number("mutation", &mut cfg.de.mutation)?;
            kv.number("crossover", &mut cfg.de.crossover)?;
            kv.parse("max_generations", &mut cfg.de.max_generations)?;
            kv.number("tolerance", &mut cfg.de.tolerance)?;
        }
        if let Some(section) = doc.section("band") {
            let kv = KeyValues::new(section, BAND_KEYS)?;
            kv.number("v_lo", &mut cfg.band.lo)?;
            kv.number("v_hi", &mut cfg.band.hi)?;
            kv.number("penalty_weight", &mut cfg.penalty_weight)?;
        }
        let mut deadband = cfg.droop.deadband();
        if let Some(section) = doc.section("converter") {
            let kv = KeyValues::new(section, CONVERTER_KEYS)?;
            if let Some(v) = kv.text("device") {
                cfg.converter.device = v.to_string();
            }
            if let Some(v) = kv.text("node") {
                cfg.converter.node = v.to_string();
            }
            kv.number("rated_kva", &mut cfg.converter.rated_kva)?;
            kv.number("q_max_kvar", &mut cfg.converter.q_max_kvar)?;
            kv.number("peak_kw", &mut cfg.converter.peak_kw)?;
            kv.number("deadband_lo", &mut deadband.0)?;
            kv.number("deadband_hi", &mut deadband.1)?;
        }
        let mut knots = cfg.droop.knots().to_vec();
        if let Some(section) = doc.section("droop") {
            let (Some(u), Some(q)) = (section.column("u"), section.column("q_fraction")) else {
                return Err(ConfigError::Field { line: section.line, column: 1, message: "[droop] needs u,q_fraction".into() });
            };
            knots = section
                .records
                .iter()
                .map(|rec| {
                    let num = |i: usize| {
                        rec.fields[i].parse::<f64>().map_err(|_| field_err(rec, i, format!("bad number {:?}", rec.fields[i])))
                    };
                    Ok((num(u)?, num(q)?))
                })
                .collect::<Result<_, ConfigError>>()?;
        }
        cfg.droop = DroopCurve::new(knots, deadband).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.schedule.steps < 1 {
            return invalid("steps must be >= 1".into());
        }
        if !(self.schedule.step_seconds > 0.0) {
            return invalid("step_seconds must be > 0".into());
        }
        if let Pacing::Paced { speedup } = self.pacing {
            if !(speedup > 0.0 && speedup.is_finite()) {
                return invalid("speedup must be > 0".into());
            }
        }
        let count = |role| self.clients.iter().filter(|c| c.role == role).count();
        if count(Role::Grid) != 1 {
            return invalid("the roster needs exactly one grid client".into());
        }
        if count(Role::Recorder) != 1 {
            return invalid("the roster needs exactly one recorder client".into());
        }
        for role in [Role::Converter, Role::Player, Role::Ppvc] {
            if count(role) > 1 {
                return invalid(format!("at most one {} client", role.as_str()));
            }
        }
        let mut names: Vec<&str> = self.clients.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("client names must be unique".into());
        }
        if self.cells > 0 && count(Role::Ppvc) == 0 {
            return invalid(format!("cells = {} needs a ppvc client", self.cells));
        }
        if self.cadence == 0 {
            return invalid("cadence must be >= 1".into());
        }
        DeParams { seed: self.seed, ..self.de }.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.band.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.penalty_weight >= 0.0) {
            return invalid("penalty_weight must be >= 0".into());
        }
        if !(self.relaxation_tol > 0.0) {
            return invalid("relaxation_tol must be > 0".into());
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.clients.iter().any(|c| c.role == role)
    }

    /// Roster entries that take part in the run; the controller is left out
    /// of a base case.
    pub fn active_clients(&self) -> Vec<&ClientSpec> {
        self.clients.iter().filter(|c| c.role != Role::Ppvc || self.cells > 0).collect()
    }

    /// Canonical text form; every field is rendered exactly, so two
    /// configurations share a snapshot only when all fields are equal.
    pub fn snapshot(&self) -> String {
        let (pacing, speedup) = match self.pacing {
            Pacing::Fast => ("fast", 1.0),
            Pacing::Paced { speedup } => ("paced", speedup),
        };
        let experiment: Vec<(&str, String)> = vec![
            ("format", "1".into()),
            ("label", self.label.clone()),
            ("network", self.network.render()),
            ("modified_lines", self.modified_lines.to_string()),
            ("load_profile", self.load_profile.render()),
            ("irradiance_profile", self.irradiance_profile.render()),
            ("steps", self.schedule.steps.to_string()),
            ("step_seconds", self.schedule.step_seconds.to_string()),
            ("pacing", pacing.into()),
            ("speedup", speedup.to_string()),
            ("transport", self.transport.as_str().into()),
            ("port", self.port.to_string()),
            ("idle_ms", self.idle_ms.to_string()),
            ("abort_on_fault", self.abort_on_fault.to_string()),
            ("cells", self.cells.to_string()),
            ("cadence", self.cadence.to_string()),
            ("relaxation_iterations", self.relaxation_iterations.to_string()),
            ("relaxation_tol", self.relaxation_tol.to_string()),
            ("output", self.output.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        let kv = |pairs: Vec<(&str, String)>| pairs.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect::<Vec<_>>();
        let optimizer = vec![
            ("population", self.de.population.to_string()),
            ("mutation", self.de.mutation.to_string()),
            ("crossover", self.de.crossover.to_string()),
            ("max_generations", self.de.max_generations.to_string()),
            ("tolerance", self.de.tolerance.to_string()),
        ];
        let band = vec![
            ("v_lo", self.band.lo.to_string()),
            ("v_hi", self.band.hi.to_string()),
            ("penalty_weight", self.penalty_weight.to_string()),
        ];
        let c = &self.converter;
        let (db_lo, db_hi) = self.droop.deadband();
        let converter = vec![
            ("device", c.device.clone()),
            ("node", c.node.clone()),
            ("rated_kva", c.rated_kva.to_string()),
            ("q_max_kvar", c.q_max_kvar.to_string()),
            ("peak_kw", c.peak_kw.to_string()),
            ("deadband_lo", db_lo.to_string()),
            ("deadband_hi", db_hi.to_string()),
        ];
        Writer::new()
            .section("experiment", &["key", "value"], kv(experiment))
            .section(
                "clients",
                &["name", "mode", "role"],
                self.clients
                    .iter()
                    .map(|c| vec![c.name.clone(), c.role.mode().to_string(), c.role.as_str().to_string()]),
            )
            .section("optimizer", &["key", "value"], kv(optimizer))
            .section("band", &["key", "value"], kv(band))
            .section("converter", &["key", "value"], kv(converter))
            .section(
                "droop",
                &["u", "q_fraction"],
                self.droop.knots().iter().map(|(u, q)| vec![u.to_string(), q.to_string()]),
            )
            .finish()
    }

    /// Hex SHA-256 of the snapshot.
    pub fn snapshot_hash(&self) -> String {
        let digest = Sha256::digest(self.snapshot().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The network as simulated, with the line changes applied if enabled.
    pub fn load_network(&self) -> Result<Network, ConfigError> {
        let net = match self.network.resolve(&self.base_dir) {
            None => benchmark::network(),
            Some(path) => parse_network(path)?,
        };
        Ok(if self.modified_lines { apply_weak_coupling_modifications(&net)? } else { net })
    }

    /// `(load, irradiance)`, each at least as long as the schedule.
    pub fn load_profiles(&self) -> Result<(Profile, Profile), ConfigError> {
        let load = |src: &Source, name: &str, builtin: fn() -> Profile| -> Result<Profile, ConfigError> {
            let p = match src.resolve(&self.base_dir) {
                None => builtin(),
                Some(path) => Profile::load(name, &path).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            };
            if (p.len() as u64) < self.schedule.steps {
                return Err(ConfigError::Invalid(format!(
                    "profile {name} has {} values, schedule needs {}",
                    p.len(),
                    self.schedule.steps
                )));
            }
            if p.step_seconds != self.schedule.step_seconds {
                return Err(ConfigError::Invalid(format!(
                    "profile {name} step is {} s, schedule step is {} s",
                    p.step_seconds, self.schedule.step_seconds
                )));
            }
            Ok(p)
        };
        Ok((
            load(&self.load_profile, "load", Profile::default_load)?,
            load(&self.irradiance_profile, "irradiance", Profile::default_irradiance)?,
        ))
    }

    /// Output directory, resolved against the config directory.
    pub fn output_dir(&self) -> PathBuf {
        if self.output.is_absolute() { self.output.clone() } else { self.base_dir.join(&self.output) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\nkey,value\nformat,1\nsteps,10\ncells,0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(cfg.schedule.steps, 10);
        assert_eq!(cfg.cells, 0);
        assert_eq!(cfg.schedule.step_seconds, 60.0);
        assert_eq!(cfg.active_clients().len(), 4);
    }

    #[test]
    fn snapshot_is_a_fixed_point() {
        let cfg = ExperimentConfig::default();
        let again = ExperimentConfig::parse(&cfg.snapshot(), Path::new(".")).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.snapshot(), cfg.snapshot());
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = ExperimentConfig::default();
        let h = base.snapshot_hash();
        let variants = [
            ExperimentConfig { seed: 2, ..base.clone() },
            ExperimentConfig { cells: 2, ..base.clone() },
            ExperimentConfig { penalty_weight: 1e4 + 1e-9, ..base.clone() },
            ExperimentConfig { modified_lines: false, ..base.clone() },
            ExperimentConfig { pacing: Pacing::Paced { speedup: 60.0 }, ..base.clone() },
        ];
        for v in variants {
            assert_ne!(v.snapshot_hash(), h);
        }
        assert_eq!(ExperimentConfig { base_dir: "/elsewhere".into(), ..base.clone() }.snapshot_hash(), h);
    }

    #[test]
    fn errors_carry_positions() {
        let err = ExperimentConfig::parse("[experiment]\nkey,value\nformat,1\nsteps,ten\n", Path::new(".")).unwrap_err();
        assert_eq!(err.to_string(), "line 4, column 7: steps: cannot parse \"ten\"");
        let err = ExperimentConfig::parse("[experiment]\nkey,value\nformat,1\nstep,10\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn roster_rules() {
        let no_grid = format!("{MINIMAL}[clients]\nname,role\nrec,recorder\n");
        assert!(ExperimentConfig::parse(&no_grid, Path::new(".")).is_err());
        let no_ppvc = "[experiment]\nkey,value\nformat,1\ncells,2\n[clients]\nname,role\ng,grid\nr,recorder\n";
        assert!(ExperimentConfig::parse(no_ppvc, Path::new(".")).is_err());
        let wrong_mode = format!("{MINIMAL}[clients]\nname,mode,role\ng,free_running,grid\nr,free_running,recorder\n");
        assert!(ExperimentConfig::parse(&wrong_mode, Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("[experiment]\nkey,value\nformat,1\nsteps,0\n", Path::new(".")).is_err());
    }
}
