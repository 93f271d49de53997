use std::path::Path;
use std::time::Instant;

use gridlink::bus::Pacing;
use gridlink::clients::RecordStore;
use gridlink::experiment::{
    compare_scenarios, load_result, run_experiment, run_experiment_with_exe, ExperimentConfig, ExperimentError,
    RunStatus, Source, Transport,
};

fn scenario(label: &str, cells: usize, steps: u64, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { label: label.into(), cells, output: out.join(label), port: 0, ..Default::default() };
    cfg.schedule.steps = steps;
    cfg
}

fn artifacts_present(dir: &Path) {
    for f in ["config.snapshot", "config.sha256", "events.log", "transcript.log", "recorder.csv", "losses.csv", "summary.txt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn threaded_run_completes_with_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = scenario("threads", 3, 45, tmp.path());
    cfg.transport = Transport::Threads;
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(r.losses_mw.len(), 45);
    artifacts_present(&r.out_dir);
    let loaded = load_result(&r.out_dir).unwrap();
    assert_eq!(loaded.energy_mwh, r.energy_mwh);
    assert_eq!(loaded.losses_mw, r.losses_mw);
    assert_eq!(loaded.config_hash, cfg.snapshot_hash());
}

#[test]
fn spawned_processes_complete_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = scenario("spawn", 3, 30, tmp.path());
    cfg.transport = Transport::Spawn;
    // Paced, so the free-running controller finishes each cycle in time.
    cfg.pacing = Pacing::Paced { speedup: 600.0 };
    let r = run_experiment_with_exe(&cfg, Path::new(env!("CARGO_BIN_EXE_gridlink"))).unwrap();
    assert_eq!(r.losses_mw.len(), 30);
    artifacts_present(&r.out_dir);
    let store = RecordStore::import_csv(&r.recorder_csv).unwrap();
    // The cycle started by the final step may still be running at shutdown.
    let cycles = store.values("signal/ppvc/objective").len();
    assert!((1..=2).contains(&cycles), "{cycles} cycles recorded");
}

#[test]
fn base_case_does_not_depend_on_transport() {
    // Without the free-running controller the run is a pure function of
    // the profiles, whatever carries the messages.
    let tmp = tempfile::tempdir().unwrap();
    let mut series = Vec::new();
    for t in [Transport::Local, Transport::Threads, Transport::Tcp] {
        let mut cfg = scenario(&format!("{t:?}"), 0, 40, tmp.path());
        cfg.transport = t;
        series.push(run_experiment(&cfg).unwrap().losses_mw);
    }
    assert_eq!(series[0], series[1]);
    assert_eq!(series[0], series[2]);
}

#[test]
fn paced_mode_follows_the_wall_clock() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = scenario("paced", 0, 5, tmp.path());
    cfg.pacing = Pacing::Paced { speedup: 600.0 };
    cfg.transport = Transport::Threads;
    let t0 = Instant::now();
    let r = run_experiment(&cfg).unwrap();
    assert!(t0.elapsed().as_secs_f64() >= 0.4, "5 steps of 0.1 s");
    let store = RecordStore::import_csv(&r.recorder_csv).unwrap();
    let times: Vec<u64> = store.series("signal/grid/losses_mw").iter().map(|r| r.wall_time_ms).collect();
    assert!(times[4] >= times[0] + 350, "{times:?}");
}

#[test]
fn solver_fault_aborts_and_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let text = gridlink::grid::benchmark::NETWORK_TEXT.replace("LD12,node12,1.2,0.3", "LD12,node12,400,300");
    let net_path = tmp.path().join("overloaded.net");
    std::fs::write(&net_path, text).unwrap();
    let mut cfg = scenario("fault", 0, 20, tmp.path());
    cfg.network = Source::File(net_path);
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, ExperimentError::Aborted { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let dir = tmp.path().join("fault");
    let log = std::fs::read_to_string(dir.join("events.log")).unwrap();
    assert!(log.contains("quality=fault"), "{log}");
    assert!(log.contains("ABORT"));
    let partial = load_result(&dir).unwrap();
    assert!(matches!(partial.status, RunStatus::Failed(_)));
    assert!(compare_scenarios(&[partial]).is_err());
}

#[test]
fn original_network_with_three_cells_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = scenario("orig", 3, 5, tmp.path());
    cfg.modified_lines = false;
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn bundled_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/experiments");
    for (name, cells) in [("base", 0), ("k1", 1), ("k2", 2), ("k3", 3)] {
        let cfg = ExperimentConfig::load(dir.join(format!("{name}.cfg"))).unwrap();
        assert_eq!(cfg.label, name);
        assert_eq!(cfg.cells, cells);
        assert_eq!(cfg.schedule.steps, 1440);
        assert_eq!(cfg.active_clients().len(), if cells == 0 { 4 } else { 5 });
    }
}
