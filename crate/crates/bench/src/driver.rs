//! Runs a workload against an in-process server and collects metrics.
//!
//! With a virtual clock everything runs on the calling thread: instances
//! are advanced cooperatively between engine polls, so a seed and a config
//! fully determine the result. With a real clock the server runs on its
//! own thread and each instance gets a client thread.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use arax::backends::ClockKind;
use arax::client::{ClientError, TaskBuffer, TaskHandle, TaskQueueHandle};
use arax::server::{ConfigError, Embedded, Engine, ServerConfig, ServerHandle, SharingMode};
use arax::shm::{ArenaError, SharedArena};
use arax::{Session, TaskDescriptor, TaskStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::{median, InstanceMetrics, Metrics, TransferSample};
use crate::workload::{Init, InstanceSpec, Step, WorkloadError, WorkloadSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error("{instance}: {source}")]
    Client {
        instance: String,
        source: ClientError,
    },
    #[error("{instance}: {what} ended with {status:?}")]
    TaskFailed {
        instance: String,
        what: String,
        status: TaskStatus,
    },
    #[error("workload stalled at t={0} ns with work outstanding")]
    Stalled(u64),
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub arena_size: u64,
    /// Tasks a queue may have outstanding before the driver waits.
    pub window: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            arena_size: 256 << 20,
            window: 64,
        }
    }
}

/// One download's bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Output {
    pub instance: String,
    pub queue: u32,
    pub buffer: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug)]
pub struct RunResult {
    pub metrics: Metrics,
    pub outputs: Vec<Output>,
    /// Tasks seen complete while an earlier task of the same queue was not.
    pub order_violations: u64,
}

/// `cfg` with the workload's kernel overrides applied.
pub fn effective_config(spec: &WorkloadSpec, cfg: &ServerConfig) -> ServerConfig {
    let mut cfg = cfg.clone();
    cfg.occupancy.extend(spec.occupancy.iter().map(|(k, v)| (k.clone(), *v)));
    cfg.kernel_types
        .extend(spec.kernel_types.iter().map(|(k, v)| (k.clone(), v.clone())));
    cfg
}

pub fn run_workload(spec: &WorkloadSpec, cfg: &ServerConfig) -> Result<RunResult, RunError> {
    run_workload_with(spec, cfg, RunOptions::default(), &mut |_| {})
}

/// Like [`run_workload`]; `observe` sees the engine after every poll with a
/// virtual clock, and once at the end with a real one.
pub fn run_workload_with(
    spec: &WorkloadSpec,
    cfg: &ServerConfig,
    opts: RunOptions,
    observe: &mut dyn FnMut(&Engine),
) -> Result<RunResult, RunError> {
    let cfg = effective_config(spec, cfg);
    cfg.validate()?;
    let table = cfg.dispatch_table();
    spec.validate(&|k| table.is_known(k))?;
    let arena = Arc::new(SharedArena::create_local(&format!("bench-{}", spec.name), opts.arena_size)?);
    let engine = Engine::new(arena.clone(), cfg.clone())?;
    let wall = Instant::now();
    let mut r = match cfg.clock() {
        ClockKind::Virtual => run_virtual(spec, Embedded::from_engine(engine), opts, observe)?,
        ClockKind::Real => run_real(spec, arena, engine, opts, observe)?,
    };
    r.metrics.wall_ns = wall.elapsed().as_nanos() as u64;
    r.metrics.workload = spec.name.clone();
    r.metrics.clock = match cfg.clock() {
        ClockKind::Virtual => "virtual".into(),
        ClockKind::Real => "real".into(),
    };
    r.metrics.mode = match cfg.mode {
        SharingMode::Shared => "shared".into(),
        SharingMode::Timeslice => "timeslice".into(),
    };
    Ok(r)
}

fn fnv1a(h: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(h, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// RNG stream for one buffer of one queue of the `instance`-th expanded
/// instance.
pub fn buffer_stream(instance: usize, queue: u32, buffer: usize) -> u64 {
    ((instance as u64) << 32) | (u64::from(queue) << 16) | buffer as u64
}

/// Host contents a buffer starts with.
pub fn initial_contents(init: Init, size: u64, seed: u64, stream: u64) -> Vec<u8> {
    let n = size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = Vec::with_capacity(n + 4);
    match init {
        Init::Zero => out.resize(n, 0),
        Init::Ramp => {
            let mut i = 0i32;
            while out.len() < n {
                out.extend_from_slice(&i.to_le_bytes());
                i = i.wrapping_add(1);
            }
        }
        Init::RandomF32 => {
            while out.len() < n {
                out.extend_from_slice(&rng.gen_range(-1.0f32..1.0).to_le_bytes());
            }
        }
        Init::RandomI32 => {
            while out.len() < n {
                out.extend_from_slice(&rng.gen_range(0i32..100).to_le_bytes());
            }
        }
    }
    out.truncate(n);
    out
}

enum What {
    Task(&'static str),
    Kernel(usize),
    Read(usize),
}

struct Pending {
    h: TaskHandle<'static>,
    what: What,
}

struct QueueRun {
    q: TaskQueueHandle,
    index: u32,
    bufs: Vec<TaskBuffer>,
    host: Vec<Vec<u8>>,
    step: usize,
    iter: u32,
    pending: VecDeque<Pending>,
}

struct InstanceRun {
    spec: InstanceSpec,
    session: Session,
    queues: Vec<QueueRun>,
    start_ns: u64,
    outputs: Vec<Output>,
    violations: u64,
    window: usize,
}

impl InstanceRun {
    fn start(
        spec: InstanceSpec,
        index: usize,
        seed: u64,
        session: Session,
        start_ns: u64,
        window: usize,
    ) -> Result<Self, RunError> {
        let client = |source| RunError::Client {
            instance: spec.name.clone(),
            source,
        };
        let mut queues = Vec::with_capacity(spec.queues as usize);
        for qi in 0..spec.queues {
            let q = session.a_acquire().map_err(client)?;
            let mut bufs = Vec::new();
            let mut host = Vec::new();
            for (bi, b) in spec.buffers.iter().enumerate() {
                bufs.push(session.a_allocate(b.size).map_err(client)?);
                host.push(initial_contents(b.init, b.size, seed, buffer_stream(index, qi, bi)));
            }
            queues.push(QueueRun {
                q,
                index: qi,
                bufs,
                host,
                step: 0,
                iter: 0,
                pending: VecDeque::new(),
            });
        }
        Ok(InstanceRun {
            spec,
            session,
            queues,
            start_ns,
            outputs: Vec::new(),
            violations: 0,
            window,
        })
    }

    fn finished(&self) -> bool {
        self.queues
            .iter()
            .all(|q| q.step >= self.spec.steps.len() && q.pending.is_empty())
    }

    fn client(&self, source: ClientError) -> RunError {
        RunError::Client {
            instance: self.spec.name.clone(),
            source,
        }
    }

    fn label(&self, what: &What) -> String {
        match what {
            What::Task(s) => s.to_string(),
            What::Kernel(step) => match &self.spec.steps[*step] {
                Step::Kernel { kernel, .. } => kernel.clone(),
                _ => unreachable!(),
            },
            What::Read(b) => format!("download of {}", self.spec.buffers[*b].name),
        }
    }

    /// Reaps finished tasks and issues more. Returns whether anything moved.
    fn advance(&mut self, issue_ns: &mut Vec<u64>, transfers: &mut Vec<TransferSample>) -> Result<bool, RunError> {
        let mut progress = false;
        for qi in 0..self.queues.len() {
            progress |= self.reap(qi)?;
            progress |= self.issue(qi, issue_ns, transfers)?;
        }
        Ok(progress)
    }

    fn reap(&mut self, qi: usize) -> Result<bool, RunError> {
        let mut progress = false;
        loop {
            let q = &mut self.queues[qi];
            let Some(front) = q.pending.front_mut() else { break };
            let status = self.session.a_poll(&mut front.h).map_err(|e| RunError::Client {
                instance: self.spec.name.clone(),
                source: e,
            })?;
            let Some(status) = status else {
                // anything behind an unfinished task must not be done yet
                let later_done = q.pending.iter().skip(1).any(|p| p.h.status().is_some());
                if later_done {
                    self.violations += 1;
                }
                break;
            };
            let p = q.pending.pop_front().unwrap();
            progress = true;
            if status != TaskStatus::Success {
                return Err(RunError::TaskFailed {
                    instance: self.spec.name.clone(),
                    what: self.label(&p.what),
                    status,
                });
            }
            if let What::Read(b) = p.what {
                let bytes = p.h.into_output().unwrap_or_default();
                let index = self.queues[qi].index;
                self.outputs.push(Output {
                    instance: self.spec.name.clone(),
                    queue: index,
                    buffer: self.spec.buffers[b].name.clone(),
                    bytes,
                });
            }
        }
        Ok(progress)
    }

    fn issue(
        &mut self,
        qi: usize,
        issue_ns: &mut Vec<u64>,
        transfers: &mut Vec<TransferSample>,
    ) -> Result<bool, RunError> {
        let mut progress = false;
        while self.queues[qi].pending.len() < self.window {
            let q = &self.queues[qi];
            let Some(step) = self.spec.steps.get(q.step) else { break };
            let mut advance_step = true;
            match step {
                Step::Upload { buffer } => {
                    let b = WorkloadSpec::buffer_index(&self.spec, buffer);
                    let h = self
                        .session
                        .a_sync_to(&q.q, &q.bufs[b], &q.host[b])
                        .map_err(|e| self.client(e))?;
                    self.queues[qi].pending.push_back(Pending {
                        h,
                        what: What::Task("upload"),
                    });
                }
                Step::Download { buffer } => {
                    let b = WorkloadSpec::buffer_index(&self.spec, buffer);
                    let size = self.spec.buffers[b].size;
                    let h = self
                        .session
                        .a_sync_from_vec(&q.q, &q.bufs[b], size)
                        .map_err(|e| self.client(e))?;
                    self.queues[qi].pending.push_back(Pending { h, what: What::Read(b) });
                }
                Step::Kernel {
                    kernel,
                    args,
                    scalars,
                    repeat,
                } => {
                    let mut d = TaskDescriptor::new(kernel.as_str());
                    for a in args {
                        d = d.arg(&q.bufs[WorkloadSpec::buffer_index(&self.spec, &a.buffer)], a.dir);
                    }
                    let mut blob = Vec::new();
                    for s in scalars {
                        s.encode(q.iter, &mut blob);
                    }
                    let d = d.scalars(blob);
                    let t0 = Instant::now();
                    let h = match self.session.try_issue(&q.q, &d) {
                        Ok(h) => h,
                        Err(ClientError::QueueFull) => break,
                        Err(e) => return Err(self.client(e)),
                    };
                    issue_ns.push(t0.elapsed().as_nanos() as u64);
                    let step = q.step;
                    let q = &mut self.queues[qi];
                    q.pending.push_back(Pending {
                        h,
                        what: What::Kernel(step),
                    });
                    q.iter += 1;
                    advance_step = q.iter >= *repeat;
                }
                Step::Barrier => {
                    if !q.pending.is_empty() {
                        break;
                    }
                }
                Step::TransferProbe { bytes, reps } => {
                    if !q.pending.is_empty() {
                        break;
                    }
                    let sample = probe(&self.session, &q.q, *bytes, *reps).map_err(|e| self.client(e))?;
                    transfers.push(sample);
                }
            }
            progress = true;
            if advance_step {
                let q = &mut self.queues[qi];
                q.step += 1;
                q.iter = 0;
            }
        }
        Ok(progress)
    }

    fn finish(self, end_ns: u64) -> Result<(InstanceMetrics, Vec<Output>, u64), RunError> {
        for q in &self.queues {
            for b in &q.bufs {
                self.session.a_free(b).map_err(|e| self.client(e))?;
            }
            self.session.a_release(&q.q).map_err(|e| self.client(e))?;
        }
        let mut digest = FNV_OFFSET;
        let mut outs: Vec<&Output> = self.outputs.iter().collect();
        outs.sort_by_key(|o| o.queue);
        for o in outs {
            digest = fnv1a(digest, &o.bytes);
        }
        let m = InstanceMetrics {
            name: self.spec.name.clone(),
            priority: self.spec.priority.to_string(),
            queues: self.spec.queues,
            tasks: self.spec.tasks_per_queue() * u64::from(self.spec.queues),
            start_ns: self.start_ns,
            end_ns,
            digest,
        };
        Ok((m, self.outputs, self.violations))
    }
}

/// Times staged uploads of `bytes` against a plain copy of the same bytes.
fn probe(s: &Session, q: &TaskQueueHandle, bytes: u64, reps: u32) -> Result<TransferSample, ClientError> {
    let data: Vec<u8> = (0..bytes).map(|i| (i * 31 % 251) as u8).collect();
    let buf = s.a_allocate(bytes)?;
    let upload = || -> Result<u64, ClientError> {
        let t0 = Instant::now();
        let mut h = s.a_sync_to(q, &buf, &data)?;
        match s.a_wait(&mut h)? {
            TaskStatus::Success => Ok(t0.elapsed().as_nanos() as u64),
            _ => Err(ClientError::Oversize {
                len: bytes,
                declared: bytes,
            }),
        }
    };
    // first upload realizes device memory and faults in staging pages
    upload()?;
    let mut dst = data.clone();
    // alternate the two so both see the same machine state
    let mut staged = Vec::with_capacity(reps as usize);
    let mut direct = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        staged.push(upload()?);
        let t0 = Instant::now();
        dst.copy_from_slice(std::hint::black_box(&data));
        std::hint::black_box(&mut dst);
        direct.push(t0.elapsed().as_nanos() as u64);
    }
    s.a_free(&buf)?;
    Ok(TransferSample {
        bytes,
        staged_ns: median(&staged).unwrap(),
        direct_ns: median(&direct).unwrap(),
    })
}

struct Collected {
    instances: Vec<InstanceMetrics>,
    outputs: Vec<Output>,
    violations: u64,
    issue_ns: Vec<u64>,
    transfers: Vec<TransferSample>,
}

fn assemble(c: Collected, order: &[String], engine: &Engine) -> RunResult {
    let mut instances = c.instances;
    instances.sort_by_key(|i| order.iter().position(|n| *n == i.name));
    let start = instances.iter().map(|i| i.start_ns).min().unwrap_or(0);
    let end = instances.iter().map(|i| i.end_ns).max().unwrap_or(0);
    let stats = engine.stats();
    let metrics = Metrics {
        makespan_ns: end - start,
        tasks: instances.iter().map(|i| i.tasks).sum(),
        device_busy_ns: engine.devices().iter().map(|d| d.busy_ns()).collect(),
        migrations: stats.migrations,
        bytes_moved: stats.bytes_moved,
        issue_ns: c.issue_ns,
        transfers: c.transfers,
        instances,
        ..Metrics::default()
    };
    let mut outputs = c.outputs;
    outputs.sort_by_key(|o| (order.iter().position(|n| *n == o.instance), o.queue));
    RunResult {
        metrics,
        outputs,
        order_violations: c.violations,
    }
}

fn run_virtual(
    spec: &WorkloadSpec,
    rt: Embedded,
    opts: RunOptions,
    observe: &mut dyn FnMut(&Engine),
) -> Result<RunResult, RunError> {
    let insts = spec.expanded();
    let order: Vec<String> = insts.iter().map(|i| i.name.clone()).collect();
    let mut waiting: Vec<(usize, InstanceSpec)> = insts.into_iter().enumerate().collect();
    waiting.sort_by_key(|(i, s)| (s.arrival_us, *i));
    let mut waiting: VecDeque<_> = waiting.into();
    let mut running: Vec<InstanceRun> = Vec::new();
    let mut c = Collected {
        instances: Vec::new(),
        outputs: Vec::new(),
        violations: 0,
        issue_ns: Vec::new(),
        transfers: Vec::new(),
    };
    let mut idle_rounds = 0u32;
    loop {
        let now = rt.engine().now();
        let mut progress = false;
        while waiting.front().is_some_and(|(_, s)| s.arrival_us * 1_000 <= now) {
            let (index, s) = waiting.pop_front().unwrap();
            let session = rt.session(s.priority.into());
            let start = s.arrival_us * 1_000;
            running.push(InstanceRun::start(s, index, spec.seed, session, start, opts.window)?);
            progress = true;
        }
        let mut k = 0;
        while k < running.len() {
            progress |= running[k].advance(&mut c.issue_ns, &mut c.transfers)?;
            if running[k].finished() {
                let (m, outs, v) = running.swap_remove(k).finish(now)?;
                c.instances.push(m);
                c.outputs.extend(outs);
                c.violations += v;
                progress = true;
            } else {
                k += 1;
            }
        }
        {
            let mut e = rt.engine();
            progress |= e.poll();
            observe(&e);
        }
        if running.is_empty() && waiting.is_empty() {
            break;
        }
        if progress {
            idle_rounds = 0;
            continue;
        }
        let mut e = rt.engine();
        let arrival = waiting.front().map(|(_, s)| s.arrival_us * 1_000);
        let next = match (e.next_event(), arrival) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        match next {
            Some(t) if t > now => e.advance_to(t),
            _ => {
                idle_rounds += 1;
                if idle_rounds > 1_000 {
                    return Err(RunError::Stalled(now));
                }
            }
        }
    }
    let e = rt.engine();
    Ok(assemble(c, &order, &e))
}

fn run_real(
    spec: &WorkloadSpec,
    arena: Arc<SharedArena>,
    engine: Engine,
    opts: RunOptions,
    observe: &mut dyn FnMut(&Engine),
) -> Result<RunResult, RunError> {
    let insts = spec.expanded();
    let order: Vec<String> = insts.iter().map(|i| i.name.clone()).collect();
    let server = ServerHandle::spawn(engine);
    let t0 = Instant::now();
    let now = move || t0.elapsed().as_nanos() as u64;
    type Done = Result<(InstanceMetrics, Vec<Output>, u64, Vec<u64>, Vec<TransferSample>), RunError>;
    let results: Vec<Done> = std::thread::scope(|sc| {
        let handles: Vec<_> = insts
            .into_iter()
            .enumerate()
            .map(|(index, s)| {
                let arena = arena.clone();
                sc.spawn(move || -> Done {
                    let arrival = s.arrival_us * 1_000;
                    if arrival > now() {
                        std::thread::sleep(Duration::from_nanos(arrival - now()));
                    }
                    let session = Session::attach(arena, s.priority.into());
                    let mut run = InstanceRun::start(s, index, spec.seed, session, now(), opts.window)?;
                    let mut issue_ns = Vec::new();
                    let mut transfers = Vec::new();
                    while !run.finished() {
                        if !run.advance(&mut issue_ns, &mut transfers)? {
                            std::thread::yield_now();
                        }
                    }
                    let (m, outs, v) = run.finish(now())?;
                    Ok((m, outs, v, issue_ns, transfers))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("client thread panicked")).collect()
    });
    let engine = server.stop();
    observe(&engine);
    let mut c = Collected {
        instances: Vec::new(),
        outputs: Vec::new(),
        violations: 0,
        issue_ns: Vec::new(),
        transfers: Vec::new(),
    };
    for r in results {
        let (m, outs, v, issue, tr) = r?;
        c.instances.push(m);
        c.outputs.extend(outs);
        c.violations += v;
        c.issue_ns.extend(issue);
        c.transfers.extend(tr);
    }
    Ok(assemble(c, &order, &engine))
}
