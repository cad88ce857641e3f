use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arax::backends::ClockKind;
use arax::server::{Policy, ServerConfig, SharingMode};
use bench::scenario::{scenario, virtual_config, SCENARIOS};
use bench::{report, run_workload_with, RunOptions, RunResult, WorkloadSpec};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "arax-bench", about = "Run workloads and experiment scenarios against an in-process runtime")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Virtual,
    Real,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload file and write its metrics as CSV.
    Run {
        workload: PathBuf,
        /// Server config TOML; one simulated GPU when omitted.
        #[arg(long)]
        server_config: Option<PathBuf>,
        /// Override the config's sharing mode (shared or timeslice).
        #[arg(long)]
        mode: Option<SharingMode>,
        /// Override the config's policy (roundrobin or elastic).
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long, value_enum)]
        clock: Option<Clock>,
        /// Override the workload's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV output path; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in scenario; writes one CSV per variant into the directory.
    Scenario {
        name: String,
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
    },
    /// List built-in scenarios.
    List,
    /// Write the built-in workloads as TOML files into a directory.
    Export {
        #[arg(default_value = "workloads")]
        dir: PathBuf,
    },
}

fn summary(label: &str, r: &RunResult) {
    let m = &r.metrics;
    eprintln!(
        "{label}: {} tasks, makespan {:.3} ms, {} migrations, wall {:.1} ms",
        m.tasks,
        m.makespan_ns as f64 / 1e6,
        m.migrations,
        m.wall_ns as f64 / 1e6
    );
    for i in &m.instances {
        eprintln!("  {:<16} {:>5} turnaround {:.3} ms", i.name, i.priority, i.turnaround_ns() as f64 / 1e6);
    }
    for t in &m.transfers {
        eprintln!("  transfer {:>10} B staged/direct {:.2}", t.bytes, t.ratio());
    }
}

fn write(r: &RunResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => report(&r.metrics, p).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", bench::to_csv(&r.metrics));
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            workload,
            server_config,
            mode,
            policy,
            clock,
            seed,
            out,
        } => {
            let mut spec = WorkloadSpec::load(&workload).with_context(|| workload.display().to_string())?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let mut cfg = match &server_config {
                Some(p) => ServerConfig::load(p)?,
                None => virtual_config(1),
            };
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(p) = policy {
                cfg.policy = p;
            }
            match clock {
                Some(Clock::Virtual) => cfg.timing.clock = ClockKind::Virtual,
                Some(Clock::Real) => cfg.timing.clock = ClockKind::Real,
                None => {}
            }
            let opts = RunOptions {
                arena_size: bench::scenario::arena_for(&spec),
                ..RunOptions::default()
            };
            let r = run_workload_with(&spec, &cfg, opts, &mut |_| {})?;
            summary(&spec.name, &r);
            write(&r, out.as_deref())?;
        }
        Cmd::Scenario { name, out } => {
            let s = scenario(&name)?;
            eprintln!("{}: {}", s.name, s.description);
            std::fs::create_dir_all(&out)?;
            for (label, r) in s.run()? {
                summary(&label, &r);
                let path = out.join(format!("{}_{label}.csv", s.name));
                write(&r, Some(&path))?;
            }
        }
        Cmd::Export { dir } => {
            std::fs::create_dir_all(&dir)?;
            for (stem, w) in bench::scenario::shipped_workloads() {
                std::fs::write(dir.join(format!("{stem}.toml")), w.to_toml())?;
            }
        }
        Cmd::List => {
            for name in SCENARIOS {
                match scenario(name) {
                    Ok(s) => println!("{name:<18} {}", s.description),
                    Err(e) => bail!(e),
                }
            }
        }
    }
    Ok(())
}
