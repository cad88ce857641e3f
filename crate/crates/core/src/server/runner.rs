//! Ways to drive an [`Engine`]: a background thread serving a shared
//! segment, or an in-process pairing where clients pump the engine while
//! they wait.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::client::{Progress, Session};
use crate::scheduler::PriorityClass;
use crate::shm::{ArenaError, ServerState, SharedArena, DEFAULT_ARENA_SIZE};

use super::{ConfigError, Engine, ServerConfig};

/// Server loop running on its own thread.
pub struct ServerHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Engine>>,
}

impl ServerHandle {
    pub fn spawn(mut engine: Engine) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name("arax-server".into())
            .spawn(move || {
                let mut idle = 0u32;
                while !flag.load(Ordering::Acquire)
                    && engine.arena().server_state() != ServerState::ShutdownRequested
                {
                    if engine.poll() {
                        idle = 0;
                        continue;
                    }
                    if engine.is_virtual() {
                        if let Some(t) = engine.next_event() {
                            engine.advance_to(t);
                            continue;
                        }
                    }
                    idle = idle.saturating_add(1);
                    if idle < 64 {
                        std::thread::yield_now();
                    } else {
                        let us = (idle as u64 - 63).min(200);
                        std::thread::sleep(Duration::from_micros(us));
                    }
                }
                engine
            })
            .expect("spawn server thread");
        ServerHandle {
            stop,
            thread: Some(thread),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Stops the loop and hands back the engine for inspection.
    pub fn stop(mut self) -> Engine {
        self.stop.store(true, Ordering::Release);
        self.thread
            .take()
            .unwrap()
            .join()
            .expect("server thread panicked")
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Engine and clients in one process, no server thread. Blocking client
/// calls pump the engine, so with a virtual clock every run is
/// deterministic.
pub struct Embedded {
    arena: Arc<SharedArena>,
    engine: Arc<Mutex<Engine>>,
}

impl Embedded {
    pub fn new(cfg: ServerConfig) -> Result<Self, EmbeddedError> {
        Self::with_arena_size(cfg, DEFAULT_ARENA_SIZE)
    }

    pub fn with_arena_size(cfg: ServerConfig, size: u64) -> Result<Self, EmbeddedError> {
        let arena = Arc::new(SharedArena::create_local("embedded", size)?);
        let engine = Engine::new(arena.clone(), cfg)?;
        Ok(Self::from_engine(engine))
    }

    pub fn from_engine(engine: Engine) -> Self {
        Embedded {
            arena: engine.arena().clone(),
            engine: Arc::new(Mutex::new(engine)),
        }
    }

    pub fn arena(&self) -> &Arc<SharedArena> {
        &self.arena
    }

    pub fn session(&self, priority: PriorityClass) -> Session {
        let engine = self.engine.clone();
        Session::attach_with_progress(
            self.arena.clone(),
            priority,
            Arc::new(move || engine.lock().unwrap_or_else(|e| e.into_inner()).pump()),
        )
    }

    pub fn engine(&self) -> MutexGuard<'_, Engine> {
        self.engine.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn pump(&self) -> Progress {
        self.engine().pump()
    }

    pub fn run_until_idle(&self) {
        self.engine().run_until_idle();
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddedError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
}
