use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridlink::bus::Pacing;
use gridlink::experiment::{
    cells_report, compare_scenarios, load_result, run_client_process, run_experiment, serve_experiment,
    write_comparison, ConfigError, ExperimentConfig, ExperimentError, Overrides, Transport,
};

#[derive(Parser)]
#[command(name = "gridlink", version, about = "Co-simulation of distribution grids with cell-based voltage control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Start every client as its own process connected over TCP.
        #[arg(long)]
        spawn: bool,
    },
    /// Compute electrical distances and cells for a network file
    /// (`builtin` for the bundled benchmark).
    Cells {
        network: String,
        #[arg(long)]
        k: usize,
        /// Also report the network with the weak-coupling line changes.
        #[arg(long)]
        modified: bool,
        #[arg(long, default_value = "cells")]
        out: PathBuf,
    },
    /// Compare result directories against the base case.
    Compare {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = "comparison")]
        out: PathBuf,
    },
    /// Serve an experiment over TCP and wait for external clients.
    Serve {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Run one roster client against a served experiment.
    #[command(hide = true)]
    Client {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        base_dir: Option<PathBuf>,
        #[arg(long)]
        name: String,
        #[arg(long)]
        addr: String,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Advance as fast as the clients allow.
    #[arg(long, conflicts_with = "paced")]
    fast: bool,
    /// Advance in wall-clock time scaled by --speedup.
    #[arg(long)]
    paced: bool,
    #[arg(long)]
    speedup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn load(&self, path: &Path, spawn: bool) -> Result<ExperimentConfig, ConfigError> {
        let cfg = ExperimentConfig::load(path)?;
        self.apply(cfg, spawn)
    }

    fn apply(&self, mut cfg: ExperimentConfig, spawn: bool) -> Result<ExperimentConfig, ConfigError> {
        let pacing = match (self.fast, self.paced, self.speedup) {
            (true, _, _) => Some(Pacing::Fast),
            (_, true, s) => Some(Pacing::Paced { speedup: s.unwrap_or(1.0) }),
            (_, _, Some(speedup)) => match cfg.pacing {
                Pacing::Paced { .. } => Some(Pacing::Paced { speedup }),
                Pacing::Fast => return Err(ConfigError::Invalid("--speedup needs paced mode".into())),
            },
            _ => None,
        };
        let overrides = Overrides {
            seed: self.seed,
            // Command-line paths are relative to the working directory.
            output: self.out.as_ref().map(|p| std::path::absolute(p).unwrap_or_else(|_| p.clone())),
            pacing,
            transport: spawn.then_some(Transport::Spawn),
        };
        overrides.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn execute(cmd: Cmd) -> Result<(), ExperimentError> {
    match cmd {
        Cmd::Run { config, run, spawn } => {
            let cfg = run.load(&config, spawn)?;
            let r = run_experiment(&cfg)?;
            println!(
                "{}: {} steps, losses {:.6} MWh, {} violations -> {}",
                r.label,
                r.steps,
                r.energy_mwh,
                r.violation_count,
                r.out_dir.display()
            );
        }
        Cmd::Cells { network, k, modified, out } => {
            let path = (network != "builtin").then(|| PathBuf::from(&network));
            let report = cells_report(path.as_deref(), k, modified, &out)?;
            print!("{}", report.summary());
        }
        Cmd::Compare { results, out } => {
            let loaded = results.iter().map(load_result).collect::<Result<Vec<_>, _>>()?;
            let c = compare_scenarios(&loaded)?;
            let (csv, _) = write_comparison(&c, &out)?;
            print!("{}", c.to_csv());
            if !c.non_increasing {
                println!("note: losses do not fall monotonically with the number of cells");
            }
            println!("written to {}", csv.display());
        }
        Cmd::Serve { config, run, port } => {
            let mut cfg = run.load(&config, false)?;
            if let Some(p) = port {
                cfg.port = p;
            }
            let r = serve_experiment(&cfg, |addr| println!("listening on {addr}"))?;
            println!("{}: losses {:.6} MWh -> {}", r.label, r.energy_mwh, r.out_dir.display());
        }
        Cmd::Client { config, base_dir, name, addr, run } => {
            let dir = base_dir.or_else(|| config.parent().map(Path::to_path_buf)).unwrap_or_default();
            let text = std::fs::read_to_string(&config)
                .map_err(|source| ConfigError::Io { path: config.display().to_string(), source })?;
            let cfg = run.apply(ExperimentConfig::parse(&text, &dir)?, false)?;
            run_client_process(&cfg, &name, &addr)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
