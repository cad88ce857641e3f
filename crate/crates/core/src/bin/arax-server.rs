//! Standalone server: creates the shared segment, serves it until SIGINT or
//! a shutdown request, then optionally writes per-device metrics as CSV.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;

use arax::backends::ClockKind;
use arax::server::{parse_size, uniform_devices, Engine, Policy, ServerConfig, ServerHandle, SharingMode};
use arax::shm::{ServerState, SharedArena};

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

#[derive(Parser, Debug)]
#[command(name = "arax-server", about = "Serve accelerator tasks over a shared-memory segment")]
struct Args {
    /// Segment name clients attach to (ARAX_SHM).
    #[arg(long, default_value = "arax")]
    shm_name: String,
    /// TOML device roster and engine settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this many identical simulated GPUs instead of a roster.
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    mode: Option<SharingMode>,
    /// `real` (default without a config) times kernels by wall clock,
    /// `virtual` uses the cost model.
    #[arg(long)]
    clock: Option<String>,
    #[arg(long, default_value = "256MiB", value_parser = parse_size)]
    arena_size: u64,
    /// Write per-device metrics here on exit.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => ServerConfig::load(p)?,
        None => ServerConfig::with_devices(uniform_devices(args.devices.unwrap_or(1))),
    };
    if let (Some(n), Some(_)) = (args.devices, &args.config) {
        anyhow::ensure!(n == cfg.devices.len(), "--devices {n} disagrees with the config roster");
    }
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    let clock = args.clock.as_deref().or(args.config.is_none().then_some("real"));
    if let Some(clock) = clock {
        cfg.timing.clock = match clock {
            "real" => ClockKind::Real,
            "virtual" => ClockKind::Virtual,
            other => anyhow::bail!("unknown clock {other:?}"),
        };
    }

    let arena = Arc::new(
        SharedArena::create(&args.shm_name, args.arena_size)
            .with_context(|| format!("creating segment {:?}", args.shm_name))?,
    );
    let engine = Engine::new(arena.clone(), cfg)?;
    // SAFETY: the handler only stores to an atomic.
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as extern "C" fn(libc::c_int) as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_sigint as extern "C" fn(libc::c_int) as libc::sighandler_t);
    }
    eprintln!(
        "arax-server: serving {:?} with {} device(s)",
        args.shm_name,
        engine.devices().len()
    );
    let handle = ServerHandle::spawn(engine);
    while !INTERRUPTED.load(Ordering::SeqCst) && !handle.is_finished() {
        std::thread::sleep(Duration::from_millis(20));
    }
    arena.set_server_state(ServerState::ShutdownRequested);
    let engine = handle.stop();

    if let Some(path) = &args.metrics {
        write_metrics(path, &engine)?;
    }
    let s = engine.stats();
    eprintln!(
        "arax-server: {} ok, {} failed, {} migrations",
        s.tasks_succeeded, s.tasks_failed, s.migrations
    );
    Ok(())
}

fn write_metrics(path: &PathBuf, engine: &Engine) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["device", "name", "type", "launches", "busy_ns", "used_bytes", "reload_ns"])?;
    for d in engine.devices() {
        let desc = d.descriptor();
        w.write_record([
            d.id().to_string(),
            desc.name.clone(),
            desc.device_type.to_string(),
            d.launches().to_string(),
            d.busy_ns().to_string(),
            d.used().to_string(),
            d.reload_ns_total().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
