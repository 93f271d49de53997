use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::result::{RunStatus, ScenarioResult};
use super::{sha256_hex, ClientSpec, ConfigError, ExperimentConfig, ExperimentError, Role, Transport};
use crate::bus::{
    run_tcp_client, run_threaded, LocalScheduler, Manifest, Outcome, Pacing, Participant, RunReport, RuntimeOptions,
    TcpBroker,
};
use crate::cells::{cluster_cells, distance_pipeline, CellPartition};
use crate::clients::{
    topics, ConverterClient, ConverterConfig, GridClient, GridConfig, PpvcClient, PpvcClientConfig, Profile,
    ProfilePlayer, RecordStore, RecorderClient, RecorderClock,
};
use crate::grid::{to_per_unit, Network, PerUnitNetwork};
use crate::ppvc::{DeParams, PpvcSettings};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub pacing: Option<Pacing>,
    pub transport: Option<Transport>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.output {
            cfg.output = out.clone();
        }
        if let Some(p) = self.pacing {
            cfg.pacing = p;
        }
        if let Some(t) = self.transport {
            cfg.transport = t;
        }
        cfg.validate()
    }
}

/// Partition used by the controller, or `None` for a base case. A partition
/// with a cell lacking controllable devices is a configuration error.
pub fn build_partition(cfg: &ExperimentConfig, net: &Network) -> Result<Option<CellPartition>, ConfigError> {
    if cfg.cells == 0 {
        return Ok(None);
    }
    let pipeline = distance_pipeline(net)?;
    let partition = cluster_cells(&pipeline.normalized, cfg.cells, net)?;
    partition.validate_for_control()?;
    Ok(Some(partition))
}

/// Everything the clients of one run are built from.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub net: PerUnitNetwork,
    pub partition: Option<CellPartition>,
    pub load: Profile,
    pub irradiance: Profile,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let net = cfg.load_network()?;
        let partition = build_partition(cfg, &net)?;
        let (load, irradiance) = cfg.load_profiles()?;
        Ok(Self { net: to_per_unit(&net), partition, load, irradiance, out_dir: cfg.output_dir() })
    }

    /// Hash of the profile values actually played.
    pub fn profiles_hash(&self) -> String {
        sha256_hex(format!("{}{}", self.load.to_text(), self.irradiance.to_text()).as_bytes())
    }
}

type Built = (Box<dyn Participant>, Option<Arc<Mutex<RecordStore>>>);

fn build(cfg: &ExperimentConfig, spec: &ClientSpec, ctx: &RunContext) -> Result<Built, ExperimentError> {
    let has_player = cfg.has_role(Role::Player);
    let p: Box<dyn Participant> = match spec.role {
        Role::Grid => {
            let gc = GridConfig {
                name: spec.name.clone(),
                coupling_node: cfg.converter.node.clone(),
                external_device: cfg.has_role(Role::Converter).then(|| cfg.converter.device.clone()),
                profiles_from_bus: has_player,
                relaxation_iterations: cfg.relaxation_iterations,
                relaxation_tol: cfg.relaxation_tol,
                band: cfg.band,
            };
            let local = (!has_player).then(|| (ctx.load.clone(), ctx.irradiance.clone()));
            Box::new(GridClient::new(gc, ctx.net.clone(), local)?)
        }
        Role::Converter => {
            let c = &cfg.converter;
            let cc = ConverterConfig {
                name: spec.name.clone(),
                device: c.device.clone(),
                node: c.node.clone(),
                rated_kva: c.rated_kva,
                q_max_kvar: c.q_max_kvar,
                peak_kw: c.peak_kw,
                curve: cfg.droop.clone(),
                irradiance_from_bus: has_player,
            };
            let local = (!has_player).then(|| ctx.irradiance.clone());
            Box::new(ConverterClient::new(cc, local)?)
        }
        Role::Player => Box::new(ProfilePlayer::new(
            &spec.name,
            vec![
                (topics::PROFILE_LOAD.to_string(), ctx.load.clone()),
                (topics::PROFILE_IRRADIANCE.to_string(), ctx.irradiance.clone()),
            ],
        )),
        Role::Recorder => {
            let clock = match cfg.pacing {
                Pacing::Fast => RecorderClock::Simulated { step_seconds: cfg.schedule.step_seconds },
                Pacing::Paced { .. } => RecorderClock::Wall(Instant::now()),
            };
            let export = ctx.out_dir.join("recorder.csv");
            let rec = RecorderClient::new(&spec.name, vec!["signal/#".into()], clock, Some(export));
            let store = rec.store();
            return Ok((Box::new(rec), Some(store)));
        }
        Role::Ppvc => {
            let partition = ctx
                .partition
                .clone()
                .ok_or_else(|| ConfigError::Invalid(format!("client {} needs cells > 0", spec.name)))?;
            let pc = PpvcClientConfig {
                name: spec.name.clone(),
                cadence: cfg.cadence,
                settings: PpvcSettings {
                    band: cfg.band,
                    penalty_weight: cfg.penalty_weight,
                    de: DeParams { seed: cfg.seed, ..cfg.de },
                },
                seed: cfg.seed,
            };
            Box::new(PpvcClient::new(pc, ctx.net.clone(), partition))
        }
    };
    Ok((p, None))
}

/// Builds the participant for one roster entry.
pub fn build_participant(
    cfg: &ExperimentConfig,
    spec: &ClientSpec,
    ctx: &RunContext,
) -> Result<Box<dyn Participant>, ExperimentError> {
    Ok(build(cfg, spec, ctx)?.0)
}

fn manifest(cfg: &ExperimentConfig) -> Manifest {
    let mut m = Manifest::new(cfg.schedule);
    m.abort_on_fault = cfg.abort_on_fault;
    for c in cfg.active_clients() {
        m = m.client(&c.name, c.role.mode());
    }
    m
}

fn write(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(ExperimentError::io(path))
}

/// Runs one scenario with the configured transport. Clients of the spawn
/// transport are started from the current executable.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ScenarioResult, ExperimentError> {
    let exe = std::env::current_exe().map_err(ExperimentError::io(Path::new("current executable")))?;
    run_experiment_with_exe(cfg, &exe)
}

/// As [`run_experiment`]; spawned clients run `<exe> client ...`.
pub fn run_experiment_with_exe(cfg: &ExperimentConfig, exe: &Path) -> Result<ScenarioResult, ExperimentError> {
    let ctx = RunContext::prepare(cfg)?;
    let out = &ctx.out_dir;
    std::fs::create_dir_all(out).map_err(ExperimentError::io(out))?;
    write(&out.join("config.snapshot"), &cfg.snapshot())?;
    write(&out.join("config.sha256"), &format!("{}\n", cfg.snapshot_hash()))?;
    let _ = std::fs::remove_file(out.join("recorder.csv"));

    let manifest = manifest(cfg);
    let idle = Duration::from_millis(cfg.idle_ms);
    log::info!("running {} ({} steps, {:?})", cfg.label, cfg.schedule.steps, cfg.transport);

    let (report, store) = if cfg.transport == Transport::Spawn {
        (run_spawned(cfg, manifest, exe)?, None)
    } else {
        let mut participants = Vec::new();
        let mut store = None;
        for spec in cfg.active_clients() {
            let (p, s) = build(cfg, spec, &ctx)?;
            participants.push(p);
            store = store.or(s);
        }
        let report = match cfg.transport {
            Transport::Local => LocalScheduler::new(manifest, participants, cfg.pacing).run()?.0,
            Transport::Threads => run_threaded(manifest, participants, RuntimeOptions { pacing: cfg.pacing, idle })?.0,
            _ => run_tcp_threads(cfg, manifest, participants, idle)?,
        };
        (report, store)
    };
    finish(cfg, &ctx, report, store)
}

fn run_tcp_threads(
    cfg: &ExperimentConfig,
    manifest: Manifest,
    participants: Vec<Box<dyn Participant>>,
    idle: Duration,
) -> Result<RunReport, ExperimentError> {
    let broker = TcpBroker::bind(("127.0.0.1", cfg.port), manifest, cfg.pacing)?;
    let addr = broker.local_addr()?;
    let abort = broker.abort_handle();
    let mut handles = Vec::new();
    for mut p in participants {
        let abort = abort.clone();
        handles.push(thread::spawn(move || {
            let result = run_tcp_client(addr, p.as_mut(), idle);
            let err = result.err().map(|e| (p.name().to_string(), e.to_string()));
            if let Some((name, e)) = &err {
                abort.abort(format!("client {name} failed: {e}"));
            }
            err
        }));
    }
    let served = broker.serve();
    let mut errors = Vec::new();
    for h in handles {
        if let Ok(Some(e)) = h.join() {
            errors.push(e);
        }
    }
    let mut report = served?;
    report.client_errors = errors;
    Ok(report)
}

fn run_spawned(cfg: &ExperimentConfig, manifest: Manifest, exe: &Path) -> Result<RunReport, ExperimentError> {
    let broker = TcpBroker::bind(("127.0.0.1", cfg.port), manifest, cfg.pacing)?;
    let addr = broker.local_addr()?;
    let snapshot = cfg.output_dir().join("config.snapshot");
    let mut children: Vec<(String, Child)> = Vec::new();
    for spec in cfg.active_clients() {
        let child = Command::new(exe)
            .arg("client")
            .arg("--config")
            .arg(&snapshot)
            .arg("--base-dir")
            .arg(&cfg.base_dir)
            .arg("--name")
            .arg(&spec.name)
            .arg("--addr")
            .arg(addr.to_string())
            .stdin(Stdio::null())
            .spawn();
        match child {
            Ok(c) => children.push((spec.name.clone(), c)),
            Err(e) => {
                kill_all(&mut children);
                return Err(ExperimentError::Io { path: exe.display().to_string(), source: e });
            }
        }
    }
    let children = Arc::new(Mutex::new(children));
    let done = Arc::new(AtomicBool::new(false));
    let watcher = {
        let (children, done, abort) = (Arc::clone(&children), Arc::clone(&done), broker.abort_handle());
        thread::spawn(move || {
            let mut errors = Vec::new();
            while !done.load(Ordering::SeqCst) {
                for (name, child) in children.lock().expect("child list").iter_mut() {
                    if let Ok(Some(status)) = child.try_wait() {
                        if !status.success() && !errors.iter().any(|(n, _)| n == name) {
                            let msg = format!("exited with {status}");
                            abort.abort(format!("client {name} {msg}"));
                            errors.push((name.clone(), msg));
                        }
                    }
                }
                thread::sleep(Duration::from_millis(20));
            }
            errors
        })
    };
    let served = broker.serve();
    // Clients leave after SHUTDOWN; anything still alive after a grace
    // period is killed.
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let mut list = children.lock().expect("child list");
        if list.iter_mut().all(|(_, c)| matches!(c.try_wait(), Ok(Some(_)))) {
            break;
        }
        if Instant::now() >= deadline {
            kill_all(&mut list);
            break;
        }
        drop(list);
        thread::sleep(Duration::from_millis(20));
    }
    done.store(true, Ordering::SeqCst);
    let mut errors = watcher.join().unwrap_or_default();
    for (name, child) in children.lock().expect("child list").iter_mut() {
        if let Ok(Some(status)) = child.try_wait() {
            if !status.success() && !errors.iter().any(|(n, _)| n == name) {
                errors.push((name.clone(), format!("exited with {status}")));
            }
        }
    }
    let mut report = served?;
    report.client_errors = errors;
    Ok(report)
}

fn kill_all(children: &mut [(String, Child)]) {
    for (_, c) in children.iter_mut() {
        let _ = c.kill();
        let _ = c.wait();
    }
}

fn finish(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    report: RunReport,
    store: Option<Arc<Mutex<RecordStore>>>,
) -> Result<ScenarioResult, ExperimentError> {
    let out = &ctx.out_dir;
    write(&out.join("events.log"), &report.log)?;
    write(&out.join("transcript.log"), &report.transcript)?;
    let recorder_csv = out.join("recorder.csv");
    let store = match store {
        Some(s) => {
            let s = s.lock().expect("recorder store").clone();
            s.export_csv(&recorder_csv)?;
            s
        }
        None if recorder_csv.exists() => RecordStore::import_csv(&recorder_csv)?,
        None => RecordStore::new(),
    };
    let mut reasons = Vec::new();
    if let Outcome::Aborted(r) = &report.outcome {
        reasons.push(r.clone());
    }
    for (name, e) in &report.client_errors {
        reasons.push(format!("client {name}: {e}"));
    }
    let status = if reasons.is_empty() { RunStatus::Completed } else { RunStatus::Failed(reasons.join("; ")) };
    let result = ScenarioResult::from_store(
        &store,
        &cfg.label,
        cfg.cells,
        cfg.schedule.steps,
        cfg.schedule.step_seconds,
        status,
        cfg.snapshot_hash(),
        ctx.profiles_hash(),
        out,
    );
    result.save()?;
    let series: Vec<(f64, f64)> = result.losses_mw.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, l)).collect();
    let svg = crate::plot::line_chart(&cfg.label, "step", "losses (MW)", &[(cfg.label.clone(), series)]);
    write(&out.join("losses.svg"), &svg)?;
    log::info!("{}: {:.6} MWh in {:.1} s", cfg.label, result.energy_mwh, report.wall.as_secs_f64());
    match &result.status {
        RunStatus::Completed => Ok(result),
        RunStatus::Failed(reason) => {
            Err(ExperimentError::Aborted { reason: reason.clone(), out_dir: out.display().to_string() })
        }
    }
}

/// Serves the experiment over TCP and waits for every roster client to
/// connect from outside, for example with `gridlink client`.
pub fn serve_experiment(cfg: &ExperimentConfig, on_bound: impl FnOnce(std::net::SocketAddr)) -> Result<ScenarioResult, ExperimentError> {
    let ctx = RunContext::prepare(cfg)?;
    let out = &ctx.out_dir;
    std::fs::create_dir_all(out).map_err(ExperimentError::io(out))?;
    write(&out.join("config.snapshot"), &cfg.snapshot())?;
    write(&out.join("config.sha256"), &format!("{}\n", cfg.snapshot_hash()))?;
    let broker = TcpBroker::bind(("0.0.0.0", cfg.port), manifest(cfg), cfg.pacing)?;
    on_bound(broker.local_addr()?);
    let report = broker.serve()?;
    finish(cfg, &ctx, report, None)
}

/// Runs one roster entry as a TCP client of an experiment served elsewhere.
pub fn run_client_process(cfg: &ExperimentConfig, name: &str, addr: &str) -> Result<(), ExperimentError> {
    let ctx = RunContext::prepare(cfg)?;
    let spec = cfg
        .active_clients()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| ConfigError::Invalid(format!("no active client named {name}")))?;
    let mut p = build_participant(cfg, spec, &ctx)?;
    run_tcp_client(addr, p.as_mut(), Duration::from_millis(cfg.idle_ms))?;
    Ok(())
}
