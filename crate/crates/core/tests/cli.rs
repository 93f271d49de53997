use std::path::Path;
use std::process::{Command, Output};

fn gridlink(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridlink")).args(args).current_dir(cwd).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SHORT: &str = "[experiment]\nkey,value\nformat,1\nlabel,LABEL\nsteps,20\ncells,CELLS\ncadence,10\n";

#[test]
fn run_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let base = write_config(d, "base.cfg", &SHORT.replace("LABEL", "base").replace("CELLS", "0"));
    let k2 = write_config(d, "k2.cfg", &SHORT.replace("LABEL", "k2").replace("CELLS", "2"));
    for (cfg, out) in [(&base, "out/base"), (&k2, "out/k2")] {
        let o = gridlink(&["run", cfg, "--fast", "--seed", "4", "--out", out], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = gridlink(&["compare", "out/base", "out/k2", "--out", "cmp"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("cmp/comparison.csv")).unwrap();
    assert!(csv.starts_with("label,cells,energy_losses_mwh,normalized,violation_count\nbase,0,"), "{csv}");
    assert!(d.join("cmp/comparison.svg").exists());
    let snapshot = std::fs::read_to_string(d.join("out/k2/config.snapshot")).unwrap();
    assert!(snapshot.contains("seed,4"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = gridlink(&["run", "missing.cfg"], d);
    assert_eq!(o.status.code(), Some(2));
    let bad = write_config(d, "bad.cfg", "[experiment]\nkey,value\nformat,1\nsteps,ten\n");
    let o = gridlink(&["run", &bad], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4, column 7"));
    let o = gridlink(&["run", &bad, "--speedup", "0"], d);
    assert_eq!(o.status.code(), Some(2));
    let o = gridlink(&["bogus"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_refuses_missing_results_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gridlink(&["compare", "nowhere"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn cells_reports_both_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gridlink(&["cells", "builtin", "--k", "3", "--modified", "--out", "c"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("original: k=3 above_0.5=64 controllable=false"), "{text}");
    assert!(text.contains("modified: k=3 above_0.5=70 controllable=true contiguous=true"), "{text}");
    for f in ["distance_original.csv", "distance_original.svg", "distance_modified.svg", "cells_modified_k3.csv"] {
        assert!(tmp.path().join("c").join(f).exists(), "{f}");
    }
}

#[test]
fn served_experiment_accepts_external_clients() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d, "serve.cfg", &SHORT.replace("LABEL", "served").replace("CELLS", "0"));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let mut server = Command::new(env!("CARGO_BIN_EXE_gridlink"))
        .args(["serve", &cfg, "--port", &port.to_string(), "--out", "served"])
        .current_dir(d)
        .spawn()
        .unwrap();
    let addr = format!("127.0.0.1:{port}");
    let clients: Vec<_> = ["grid", "converter", "player", "recorder"]
        .iter()
        .map(|name| {
            Command::new(env!("CARGO_BIN_EXE_gridlink"))
                .args(["client", "--config", &cfg, "--name", name, "--addr", &addr, "--out", "served"])
                .current_dir(d)
                .spawn()
                .unwrap()
        })
        .collect();
    for mut c in clients {
        assert!(c.wait().unwrap().success());
    }
    assert!(server.wait().unwrap().success());
    let summary = std::fs::read_to_string(d.join("served/summary.txt")).unwrap();
    assert!(summary.contains("status,completed"), "{summary}");
}
