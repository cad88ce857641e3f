//! The server state machine.
//!
//! One [`Engine::poll`] call performs, in order: directory sync (new and
//! released queues, allocated and freed buffers), completion reaping,
//! migration hand-off, elastic ticks, assignment of unassigned non-empty
//! queues, and one serve step per assigned queue. Accelerator threads are
//! logical workers inside the engine: each queue belongs to exactly one
//! `(device, worker)` pair and has at most one launched task at a time,
//! which is what keeps execution in issue order.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use crate::backends::{
    ClockKind, CompletionToken, Device, DeviceError, DeviceId, DevicePtr, DispatchTable,
};
use crate::client::Progress;
use crate::scheduler::{
    Assignment, ElasticEvent, ElasticPolicy, MigrationPlan, Move, PriorityClass, QueueView,
    RoundRobin,
};
use crate::shm::{
    BufferEntryState, QueueEntryState, RingQueue, ServerState, SharedArena,
    BUFFER_TABLE_CAPACITY, QUEUE_DIRECTORY_CAPACITY,
};
use crate::wire::{self, BufferId, QueueId, TaskKind, TaskStatus, WireDescriptor};

use super::config::{ConfigError, Policy, ServerConfig, SharingMode};
use super::events::{Event, EventLog};
use super::ledger::{Ledger, Residency};
use super::{synthesized_device_info, SynthesizedDeviceInfo};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub tasks_popped: u64,
    pub tasks_succeeded: u64,
    pub tasks_failed: u64,
    pub migrations: u64,
    pub rollbacks: u64,
    /// Bytes moved by queue migrations.
    pub bytes_moved: u64,
    /// Buffers moved between devices because a queue on another device
    /// referenced them.
    pub relocations: u64,
}

#[derive(Clone, Copy, Debug)]
enum Clock {
    Real(Instant),
    Virtual(u64),
}

struct QueueState {
    id: QueueId,
    session: u32,
    priority: PriorityClass,
    ring: u64,
    assignment: Assignment,
    stream: usize,
    inflight: u32,
    ready_at: u64,
    served: u64,
}

struct Inflight {
    queue_index: u32,
    queue: QueueId,
    seq: u64,
    desc: u64,
    status: TaskStatus,
}

#[derive(Clone, Copy, Default)]
struct Slice {
    active: Option<u32>,
    since: u64,
}

pub struct Engine {
    arena: Arc<SharedArena>,
    cfg: ServerConfig,
    clock: Clock,
    devices: Vec<Device>,
    dispatch: DispatchTable,
    queues: BTreeMap<u32, QueueState>,
    ledger: Ledger,
    rr: RoundRobin,
    elastic: ElasticPolicy,
    inflight: BTreeMap<(u64, u64), Inflight>,
    migrating: BTreeSet<u32>,
    slices: Vec<Slice>,
    worker_rr: Vec<usize>,
    stream_rr: Vec<usize>,
    control_seen: Option<u64>,
    rescan: bool,
    next_tick: u64,
    order: u64,
    events: EventLog,
    stats: EngineStats,
}

impl Engine {
    pub fn new(arena: Arc<SharedArena>, cfg: ServerConfig) -> Result<Self, ConfigError> {
        let dispatch = cfg.dispatch_table();
        Self::with_dispatch(arena, cfg, dispatch)
    }

    pub fn with_dispatch(
        arena: Arc<SharedArena>,
        cfg: ServerConfig,
        dispatch: DispatchTable,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let devices: Vec<Device> = cfg
            .devices
            .iter()
            .map(|d| Device::new(d.clone(), cfg.timing))
            .collect();
        let n = devices.len();
        let clock = match cfg.timing.clock {
            ClockKind::Real => Clock::Real(Instant::now()),
            ClockKind::Virtual => Clock::Virtual(0),
        };
        arena.set_server_state(ServerState::Running);
        Ok(Engine {
            arena,
            clock,
            devices,
            dispatch,
            queues: BTreeMap::new(),
            ledger: Ledger::new(),
            rr: RoundRobin::new(),
            elastic: ElasticPolicy::new(n),
            inflight: BTreeMap::new(),
            migrating: BTreeSet::new(),
            slices: vec![Slice::default(); n],
            worker_rr: vec![0; n],
            stream_rr: vec![0; n],
            control_seen: None,
            rescan: false,
            next_tick: cfg.elastic_tick_ns,
            order: 0,
            events: EventLog::new(cfg.record_events),
            stats: EngineStats::default(),
            cfg,
        })
    }

    // ---- clock ----

    pub fn now(&self) -> u64 {
        match self.clock {
            Clock::Real(t0) => t0.elapsed().as_nanos() as u64,
            Clock::Virtual(t) => t,
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self.clock, Clock::Virtual(_))
    }

    /// Moves a virtual clock forward; no effect on a real clock.
    pub fn advance_to(&mut self, t: u64) {
        if let Clock::Virtual(now) = &mut self.clock {
            *now = (*now).max(t);
        }
    }

    // ---- introspection ----

    pub fn arena(&self) -> &Arc<SharedArena> {
        &self.arena
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn dispatch(&self) -> &DispatchTable {
        &self.dispatch
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn events(&self) -> &[Event] {
        self.events.events()
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        self.events.take()
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn synthesized_device_info(&self) -> SynthesizedDeviceInfo {
        synthesized_device_info(&self.cfg.devices).expect("engine has devices")
    }

    pub fn queue_ids(&self) -> Vec<QueueId> {
        self.queues.values().map(|q| q.id).collect()
    }

    pub fn assignment_of(&self, q: QueueId) -> Option<Assignment> {
        self.queues
            .get(&q.index())
            .filter(|s| s.id == q)
            .map(|s| s.assignment)
    }

    pub fn reserved_device_of(&self, session: u32) -> Option<DeviceId> {
        self.elastic.reservation_of(session)
    }

    /// True when nothing is launched, migrating or waiting in any ring.
    pub fn is_quiescent(&self) -> bool {
        self.inflight.is_empty()
            && self.migrating.is_empty()
            && self
                .queues
                .values()
                .all(|q| RingQueue::open(&self.arena, q.ring).is_empty())
    }

    /// Checks that every buffer is realized on at most one device, that the
    /// ledger agrees with device allocations, and that device usage equals
    /// the ledger's realized bytes.
    pub fn check_single_valid_copy(&self) -> Result<(), String> {
        let mut holders: BTreeMap<BufferId, Vec<DeviceId>> = BTreeMap::new();
        for d in &self.devices {
            for (b, bytes) in d.tagged_bytes() {
                holders.entry(b).or_default().push(d.id());
                let rec = self
                    .ledger
                    .get(b)
                    .ok_or_else(|| format!("device {} holds unknown buffer {b}", d.id()))?;
                if bytes != rec.declared_size {
                    return Err(format!("buffer {b}: {bytes} B on device, {} declared", rec.declared_size));
                }
            }
        }
        for (b, ds) in &holders {
            if ds.len() > 1 {
                return Err(format!("buffer {b} realized on devices {ds:?}"));
            }
            if self.ledger.get(*b).and_then(|r| r.device()) != Some(ds[0]) {
                return Err(format!("ledger disagrees on placement of {b}"));
            }
        }
        for d in &self.devices {
            let realized = self.ledger.realized_on(d.id());
            if realized != d.used() {
                return Err(format!(
                    "device {}: ledger {} B, device {} B",
                    d.id(),
                    realized,
                    d.used()
                ));
            }
            if d.used() > d.descriptor().mem_capacity {
                return Err(format!("device {} over capacity", d.id()));
            }
        }
        Ok(())
    }

    /// Plan moving `q` to `target`: its bound buffers with their sizes.
    pub fn plan_migration(&self, q: QueueId, target: DeviceId) -> Option<MigrationPlan> {
        let source = self.assignment_of(q)?.device()?;
        let manifest = self
            .ledger
            .bound_to(q)
            .into_iter()
            .map(|b| (b, self.ledger.get(b).unwrap().declared_size))
            .collect();
        Some(MigrationPlan {
            queue: q,
            source,
            target,
            manifest,
        })
    }

    /// Starts migrating `plan.queue`; the move happens once its launched
    /// tasks have drained. Returns false if the queue is not on `plan.source`.
    pub fn migrate_queue(&mut self, plan: &MigrationPlan) -> bool {
        if plan.target >= self.devices.len() || plan.source == plan.target {
            return false;
        }
        let i = plan.queue.index();
        match self.queues.get(&i) {
            Some(q) if q.id == plan.queue && q.assignment.device() == Some(plan.source) => {}
            _ => return false,
        }
        let now = self.now();
        self.start_migration(i, plan.target, now);
        true
    }

    // ---- main loop ----

    /// One scheduling round. Returns whether anything changed.
    pub fn poll(&mut self) -> bool {
        let now = self.now();
        let mut progress = self.sync_control(now);
        progress |= self.reap(now);
        progress |= self.advance_migrations(now);
        progress |= self.elastic_tick(now);
        progress |= self.assign_queues(now);
        progress |= self.serve(now);
        progress
    }

    /// Earliest future instant at which something is scheduled to happen.
    pub fn next_event(&self) -> Option<u64> {
        let now = self.now();
        let mut t = self.inflight.keys().next().map(|k| k.0);
        let mut busy = !self.inflight.is_empty();
        for q in self.queues.values() {
            let pending = !RingQueue::open(&self.arena, q.ring).is_empty();
            busy |= pending;
            if pending && q.ready_at > now {
                t = Some(t.map_or(q.ready_at, |x| x.min(q.ready_at)));
            }
        }
        if self.cfg.policy == Policy::Elastic && busy && self.devices.len() > 1 {
            t = Some(t.map_or(self.next_tick, |x| x.min(self.next_tick)));
        }
        t.map(|x| x.max(now))
    }

    /// Polls; when nothing happened, jumps a virtual clock to the next event.
    pub fn pump(&mut self) -> Progress {
        if self.poll() {
            return Progress::Advanced;
        }
        match self.next_event() {
            Some(t) => {
                self.advance_to(t);
                Progress::Advanced
            }
            None => Progress::Stalled,
        }
    }

    /// Virtual clock: pumps until nothing is left to do.
    pub fn run_until_idle(&mut self) {
        while self.pump() == Progress::Advanced {}
    }

    // ---- directory sync ----

    fn sync_control(&mut self, now: u64) -> bool {
        let g = self.arena.control_generation();
        if self.control_seen == Some(g) && !self.rescan {
            return false;
        }
        self.control_seen = Some(g);
        self.rescan = false;
        let mut changed = false;
        for i in 0..QUEUE_DIRECTORY_CAPACITY {
            let slot = self.arena.queue_slot(i);
            let known = self.queues.get(&i).map(|q| q.id);
            match slot.state {
                QueueEntryState::Active => {
                    let id = QueueId::new(i, slot.generation);
                    if known != Some(id) {
                        self.discover_queue(i, id, slot.owner, slot.priority, slot.ring_offset, now);
                        changed = true;
                    }
                }
                QueueEntryState::Releasing => {
                    if known.is_some() {
                        if !self.release_queue(i, now) {
                            self.rescan = true;
                            continue;
                        }
                    } else {
                        let _ = self.arena.free_offset(slot.ring_offset);
                    }
                    self.arena.set_queue_state(
                        i,
                        QueueEntryState::Releasing,
                        QueueEntryState::Free,
                    );
                    changed = true;
                }
                _ => {}
            }
        }
        for i in 0..BUFFER_TABLE_CAPACITY {
            let slot = self.arena.buffer_slot(i);
            let known = self.ledger.id_at(i);
            match slot.state {
                BufferEntryState::Live => {
                    let id = BufferId::new(i, slot.generation);
                    if known != Some(id) {
                        if let Some(old) = known {
                            self.drop_buffer(old);
                        }
                        self.ledger.insert(id, slot.declared_size);
                        changed = true;
                    }
                }
                BufferEntryState::Freeing => {
                    if let Some(old) = known {
                        self.drop_buffer(old);
                    }
                    self.arena
                        .set_buffer_state(i, BufferEntryState::Freeing, BufferEntryState::Free);
                    changed = true;
                }
                BufferEntryState::Free => {
                    if let Some(old) = known {
                        self.drop_buffer(old);
                        changed = true;
                    }
                }
                BufferEntryState::Initializing => {}
            }
        }
        changed
    }

    fn discover_queue(&mut self, i: u32, id: QueueId, session: u32, prio: u32, ring: u64, now: u64) {
        let priority = PriorityClass::from_code(prio);
        self.queues.insert(
            i,
            QueueState {
                id,
                session,
                priority,
                ring,
                assignment: Assignment::Unassigned,
                stream: 0,
                inflight: 0,
                ready_at: 0,
                served: 0,
            },
        );
        self.events.push(|| Event::QueueDiscovered {
            t: now,
            queue: id,
            session,
            priority,
        });
        if priority == PriorityClass::High && self.cfg.policy == Policy::Elastic {
            let had = self.elastic.reservation_of(session);
            let moves = self
                .elastic
                .rebalance(ElasticEvent::HighPriorityArrival { session }, &self.view());
            if had.is_none() {
                if let Some(d) = self.elastic.reservation_of(session) {
                    self.events.push(|| Event::Reserved {
                        t: now,
                        device: d,
                        session,
                    });
                }
            }
            self.apply_moves(&moves, now);
        }
    }

    fn release_queue(&mut self, i: u32, now: u64) -> bool {
        let Some(q) = self.queues.get(&i) else {
            return true;
        };
        if q.inflight > 0 {
            return false;
        }
        let (id, session, priority, ring) = (q.id, q.session, q.priority, q.ring);
        for b in self.ledger.bound_to(id) {
            self.stage_to_server(b);
            if let Some(r) = self.ledger.get_mut(b) {
                r.home = None;
            }
        }
        self.migrating.remove(&i);
        for s in &mut self.slices {
            if s.active == Some(i) {
                s.active = None;
            }
        }
        self.elastic.forget_queue(id);
        let _ = self.arena.free_offset(ring);
        self.queues.remove(&i);
        self.events.push(|| Event::QueueReleased { t: now, queue: id });
        let session_left = !self.queues.values().any(|q| q.session == session);
        if priority == PriorityClass::High
            && !self
                .queues
                .values()
                .any(|q| q.session == session && q.priority == PriorityClass::High)
            && self.elastic.reservation_of(session).is_some()
        {
            self.elastic
                .rebalance(ElasticEvent::HighPriorityDeparture { session }, &[]);
            self.events.push(|| Event::Unreserved { t: now, session });
        }
        if session_left {
            self.elastic.forget_session(session);
        }
        true
    }

    /// Moves a buffer's authoritative copy from its device to server memory.
    fn stage_to_server(&mut self, b: BufferId) {
        let Some(rec) = self.ledger.get_mut(b) else {
            return;
        };
        if let Residency::DeviceResident(p) = rec.residency {
            let mut bytes = vec![0u8; rec.declared_size as usize];
            let dev = &mut self.devices[p.device];
            dev.sync_from(p, 0, &mut bytes).expect("ledger pointer is live");
            dev.free(p).expect("ledger pointer is live");
            rec.residency = Residency::ServerStaged(bytes);
            rec.moving_from = None;
        }
    }

    fn drop_buffer(&mut self, b: BufferId) {
        if let Some(rec) = self.ledger.remove(b) {
            if let Residency::DeviceResident(p) = rec.residency {
                let _ = self.devices[p.device].free(p);
            }
        }
    }

    fn adopt_buffer(&mut self, b: BufferId) -> bool {
        if self.ledger.get(b).is_some() {
            return true;
        }
        if b.index() >= BUFFER_TABLE_CAPACITY {
            return false;
        }
        let slot = self.arena.buffer_slot(b.index());
        if slot.state == BufferEntryState::Live && slot.generation == b.generation() {
            if let Some(old) = self.ledger.id_at(b.index()) {
                self.drop_buffer(old);
            }
            self.ledger.insert(b, slot.declared_size);
            return true;
        }
        false
    }

    // ---- completions ----

    fn reap(&mut self, now: u64) -> bool {
        let mut progress = false;
        while let Some(entry) = self.inflight.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let ((end, _), f) = entry.remove_entry();
            wire::store_status(&self.arena, f.desc, f.status);
            if let Some(q) = self.queues.get_mut(&f.queue_index) {
                q.inflight -= 1;
            }
            if f.status == TaskStatus::Success {
                self.stats.tasks_succeeded += 1;
            } else {
                self.stats.tasks_failed += 1;
            }
            self.events.push(|| Event::Completed {
                t: end,
                queue: f.queue,
                seq: f.seq,
                status: f.status,
            });
            progress = true;
        }
        progress
    }

    // ---- assignment ----

    fn supported(&self, kernel: &str, d: DeviceId) -> bool {
        let dev = self.devices[d].descriptor();
        dev.supports(kernel) && self.dispatch.lookup(kernel, dev.device_type).is_some()
    }

    fn candidates(&self, kernel: Option<&str>) -> Vec<DeviceId> {
        (0..self.devices.len())
            .filter(|&d| kernel.is_none_or(|k| self.supported(k, d)))
            .collect()
    }

    fn head_kernel(&self, ring: u64) -> Option<Option<String>> {
        let rec = RingQueue::open(&self.arena, ring).peek()?;
        let desc = WireDescriptor::read(&self.arena, rec.descriptor)?;
        Some((desc.kind == TaskKind::Compute).then_some(desc.kernel))
    }

    fn assign_queues(&mut self, now: u64) -> bool {
        let mut progress = false;
        let unassigned: Vec<u32> = self
            .queues
            .iter()
            .filter(|(_, q)| q.assignment == Assignment::Unassigned)
            .map(|(i, _)| *i)
            .collect();
        for i in unassigned {
            let q = &self.queues[&i];
            let ring = RingQueue::open(&self.arena, q.ring);
            if ring.is_empty() {
                continue;
            }
            let kernel = match self.head_kernel(q.ring) {
                Some(k) => k,
                None => {
                    // corrupt descriptor: fail it where it stands
                    self.fail_head(i, TaskStatus::Aborted, now);
                    progress = true;
                    continue;
                }
            };
            let cands = self.candidates(kernel.as_deref());
            if cands.is_empty() {
                self.fail_head(i, TaskStatus::UnknownKernel, now);
                progress = true;
                continue;
            }
            let session = q.session;
            let n = self.devices.len();
            let d = match self.cfg.policy {
                Policy::RoundRobin => self.rr.select(&cands, n),
                Policy::Elastic => self.elastic.place(session, &cands, &mut self.rr),
            }
            .expect("candidates are non-empty");
            self.assign(i, d, now);
            progress = true;
        }
        progress
    }

    fn assign(&mut self, i: u32, d: DeviceId, now: u64) {
        let worker = self.worker_rr[d] % self.cfg.threads_per_device;
        self.worker_rr[d] += 1;
        let stream = self.stream_rr[d] % self.devices[d].descriptor().streams;
        self.stream_rr[d] += 1;
        let q = self.queues.get_mut(&i).unwrap();
        q.assignment = Assignment::Assigned { device: d, worker };
        q.stream = stream;
        let id = q.id;
        self.events.push(|| Event::Assigned {
            t: now,
            queue: id,
            device: d,
            worker,
        });
    }

    /// Pops the head task of queue `i` and completes it with `status`.
    fn fail_head(&mut self, i: u32, status: TaskStatus, now: u64) {
        let q = self.queues.get_mut(&i).unwrap();
        let Ok(rec) = RingQueue::open(&self.arena, q.ring).pop() else {
            return;
        };
        q.inflight += 1;
        let queue = q.id;
        self.stats.tasks_popped += 1;
        self.order += 1;
        self.inflight.insert(
            (now, self.order),
            Inflight {
                queue_index: i,
                queue,
                seq: rec.sequence,
                desc: rec.descriptor,
                status,
            },
        );
    }

    fn view(&self) -> Vec<QueueView> {
        self.queues
            .values()
            .filter_map(|q| {
                let device = match q.assignment {
                    Assignment::Assigned { device, .. } => device,
                    Assignment::Orphan { to, .. } => to,
                    _ => return None,
                };
                Some(QueueView {
                    queue: q.id,
                    session: q.session,
                    priority: q.priority,
                    device,
                })
            })
            .collect()
    }

    fn apply_moves(&mut self, moves: &[Move], now: u64) {
        for m in moves {
            let i = m.queue.index();
            let Some(q) = self.queues.get_mut(&i) else {
                continue;
            };
            match q.assignment {
                Assignment::Assigned { device, .. } if device == m.from => {
                    self.start_migration(i, m.to, now);
                }
                Assignment::Orphan { from, to } if to == m.from => {
                    q.assignment = Assignment::Orphan { from, to: m.to };
                }
                _ => {}
            }
        }
    }

    // ---- elastic policy ----

    fn elastic_tick(&mut self, now: u64) -> bool {
        if self.cfg.policy != Policy::Elastic || now < self.next_tick {
            return false;
        }
        let tick = self.cfg.elastic_tick_ns.max(1);
        while self.next_tick <= now {
            self.next_tick += tick;
        }
        let mut progress = false;
        for d in 0..self.devices.len() {
            let dev = &self.devices[d];
            let idle = now.saturating_sub(dev.last_launch()) >= self.cfg.elastic_idle_ns
                && dev.timeline().horizon() <= now;
            if !idle {
                continue;
            }
            let moves = self
                .elastic
                .rebalance(ElasticEvent::IdleDeviceDetected(d), &self.view());
            progress |= !moves.is_empty();
            self.apply_moves(&moves, now);
        }
        progress
    }

    // ---- migration ----

    fn start_migration(&mut self, i: u32, target: DeviceId, now: u64) {
        let q = self.queues.get_mut(&i).unwrap();
        let Assignment::Assigned { device: from, .. } = q.assignment else {
            return;
        };
        if from == target {
            return;
        }
        q.assignment = Assignment::Orphan { from, to: target };
        let id = q.id;
        self.migrating.insert(i);
        if self.slices[from].active == Some(i) {
            self.slices[from].active = None;
        }
        self.events.push(|| Event::Orphaned {
            t: now,
            queue: id,
            from,
            to: target,
        });
    }

    fn advance_migrations(&mut self, now: u64) -> bool {
        let drained: Vec<u32> = self
            .migrating
            .iter()
            .copied()
            .filter(|i| self.queues.get(i).is_none_or(|q| q.inflight == 0))
            .collect();
        for &i in &drained {
            self.migrating.remove(&i);
            if self.queues.contains_key(&i) {
                self.finish_migration(i, now);
            }
        }
        !drained.is_empty()
    }

    fn finish_migration(&mut self, i: u32, now: u64) {
        let q = &self.queues[&i];
        let Assignment::Orphan { from, to } = q.assignment else {
            return;
        };
        let id = q.id;
        let manifest: Vec<(BufferId, DevicePtr)> = self
            .ledger
            .bound_to(id)
            .into_iter()
            .filter_map(|b| match self.ledger.get(b)?.residency {
                Residency::DeviceResident(p) if p.device == from => Some((b, p)),
                _ => None,
            })
            .collect();
        let before = self.devices[from].used();

        // device → server memory, releasing the source copy
        let mut staged: Vec<(BufferId, Vec<u8>)> = Vec::with_capacity(manifest.len());
        for (b, p) in &manifest {
            let src = &mut self.devices[from];
            let mut bytes = vec![0u8; src.size_of(*p).unwrap() as usize];
            src.sync_from(*p, 0, &mut bytes).unwrap();
            src.free(*p).unwrap();
            staged.push((*b, bytes));
        }
        let after = self.devices[from].used();

        // server memory → target
        let mut placed: Vec<(BufferId, DevicePtr)> = Vec::with_capacity(staged.len());
        let mut failed = false;
        for (b, bytes) in &staged {
            match self.devices[to].alloc(bytes.len() as u64, Some(*b)) {
                Ok(p) => {
                    self.devices[to].sync_to(p, 0, bytes).unwrap();
                    placed.push((*b, p));
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        let (dest, resident) = if failed {
            for (_, p) in &placed {
                self.devices[to].free(*p).unwrap();
            }
            let mut back = Vec::with_capacity(staged.len());
            for (b, bytes) in &staged {
                let p = self.devices[from]
                    .alloc(bytes.len() as u64, Some(*b))
                    .expect("space was just released");
                self.devices[from].sync_to(p, 0, bytes).unwrap();
                back.push((*b, p));
            }
            (from, back)
        } else {
            (to, placed)
        };

        let timing = *self.devices[dest].timing();
        let total: u64 = staged.iter().map(|(_, v)| v.len() as u64).sum();
        let dur: u64 = staged
            .iter()
            .map(|(_, v)| 2 * timing.transfer_ns(v.len() as u64))
            .sum();
        for (b, p) in &resident {
            let r = self.ledger.get_mut(*b).unwrap();
            r.residency = Residency::DeviceResident(*p);
            r.ready_at = r.ready_at.max(now + dur);
            r.moving_from = (!failed).then_some(from);
        }
        self.assign(i, dest, now);
        self.queues.get_mut(&i).unwrap().ready_at = now + dur;
        if failed {
            self.stats.rollbacks += 1;
            self.events.push(|| Event::MigrationRolledBack {
                t: now,
                queue: id,
                from,
                to,
            });
        } else {
            self.stats.migrations += 1;
            self.stats.bytes_moved += total;
            self.events.push(|| Event::Migrated {
                t: now,
                queue: id,
                from,
                to,
                bytes: total,
                source_used_before: before,
                source_used_after: after,
            });
        }
    }

    // ---- serving ----

    fn has_work(&self, i: u32, now: u64) -> bool {
        let q = &self.queues[&i];
        q.ready_at <= now && !RingQueue::open(&self.arena, q.ring).is_empty()
    }

    fn timeslice_pick(&mut self, d: DeviceId, qs: &[u32], now: u64) -> Option<u32> {
        let mut slice = self.slices[d];
        if slice.active.is_some_and(|a| !qs.contains(&a)) {
            slice.active = None;
        }
        if let Some(a) = slice.active {
            if self.queues[&a].inflight > 0 {
                return Some(a);
            }
            let expired = now.saturating_sub(slice.since) >= self.cfg.quantum_ns;
            if !expired && self.has_work(a, now) {
                return Some(a);
            }
        }
        let start = slice
            .active
            .and_then(|a| qs.iter().position(|&x| x == a))
            .map_or(0, |p| p + 1);
        let pick = (0..qs.len())
            .map(|k| qs[(start + k) % qs.len()])
            .find(|&i| self.has_work(i, now));
        match pick {
            Some(i) => {
                if slice.active != Some(i) || now.saturating_sub(slice.since) >= self.cfg.quantum_ns {
                    slice.since = now;
                }
                slice.active = Some(i);
            }
            None => slice.active = None,
        }
        self.slices[d] = slice;
        pick
    }

    fn serve(&mut self, now: u64) -> bool {
        let mut progress = false;
        for d in 0..self.devices.len() {
            self.devices[d].retire(now);
            let mut qs: Vec<(usize, u32)> = self
                .queues
                .iter()
                .filter_map(|(i, q)| match q.assignment {
                    Assignment::Assigned { device, worker } if device == d => Some((worker, *i)),
                    _ => None,
                })
                .collect();
            qs.sort_unstable();
            let order: Vec<u32> = qs.into_iter().map(|(_, i)| i).collect();
            let order = if self.cfg.mode == SharingMode::Timeslice {
                match self.timeslice_pick(d, &order, now) {
                    Some(i) => vec![i],
                    None => continue,
                }
            } else {
                order
            };
            for i in order {
                progress |= self.serve_queue_step(i, now);
            }
        }
        progress
    }

    /// Pops and launches at most one task of queue `i`.
    fn serve_queue_step(&mut self, i: u32, now: u64) -> bool {
        let q = &self.queues[&i];
        let Assignment::Assigned { device: d, worker } = q.assignment else {
            return false;
        };
        if q.inflight > 0 || q.ready_at > now {
            return false;
        }
        let ring = RingQueue::open(&self.arena, q.ring);
        let Some(rec) = ring.peek() else {
            return false;
        };
        let Some(desc) = WireDescriptor::read(&self.arena, rec.descriptor) else {
            self.fail_head(i, TaskStatus::Aborted, now);
            return true;
        };
        let mut unknown = false;
        if desc.kind == TaskKind::Compute && !self.supported(&desc.kernel, d) {
            let cands = self.candidates(Some(&desc.kernel));
            if !cands.is_empty() {
                let target = self
                    .rr
                    .select(&cands, self.devices.len())
                    .expect("non-empty");
                self.start_migration(i, target, now);
                return true;
            }
            unknown = true;
        }
        let _ = ring.pop();
        let (qid, stream) = {
            let q = self.queues.get_mut(&i).unwrap();
            q.served += 1;
            q.inflight += 1;
            (q.id, q.stream)
        };
        self.stats.tasks_popped += 1;
        self.events.push(|| Event::Popped {
            t: now,
            queue: qid,
            seq: rec.sequence,
            device: d,
            worker,
        });
        let result = if unknown {
            Err(TaskStatus::UnknownKernel)
        } else {
            self.execute(qid, d, stream, &desc, now)
        };
        let (end, status) = match result {
            Ok(tok) => {
                self.events.push(|| Event::Launched {
                    t: now,
                    queue: qid,
                    seq: rec.sequence,
                    device: d,
                    start: tok.start,
                    end: tok.end,
                });
                (tok.end, TaskStatus::Success)
            }
            Err(s) => (now, s),
        };
        self.order += 1;
        self.inflight.insert(
            (end, self.order),
            Inflight {
                queue_index: i,
                queue: qid,
                seq: rec.sequence,
                desc: rec.descriptor,
                status,
            },
        );
        if let Some(k) = self.cfg.forced_migration_every {
            let served = self.queues[&i].served;
            let n = self.devices.len();
            if n > 1 && served.is_multiple_of(k as u64) {
                self.start_migration(i, (d + 1) % n, now);
            }
        }
        true
    }

    fn execute(
        &mut self,
        q: QueueId,
        d: DeviceId,
        stream: usize,
        desc: &WireDescriptor,
        now: u64,
    ) -> Result<CompletionToken, TaskStatus> {
        let real = !self.is_virtual();
        match desc.kind {
            TaskKind::Compute => {
                let ty = self.devices[d].descriptor().device_type;
                let k = self
                    .dispatch
                    .lookup(&desc.kernel, ty)
                    .cloned()
                    .ok_or(TaskStatus::UnknownKernel)?;
                let mut ptrs = Vec::with_capacity(desc.args.len());
                let mut ready = now;
                for (b, _) in &desc.args {
                    ptrs.push(self.ensure_resident(q, *b, d, now)?);
                    ready = ready.max(self.ledger.get(*b).unwrap().ready_at);
                }
                let tok = self.devices[d]
                    .launch(stream, &k, &ptrs, &desc.scalars, ready)
                    .map_err(|e| match e {
                        DeviceError::KernelUnsupported(_) => TaskStatus::UnknownKernel,
                        _ => TaskStatus::Aborted,
                    })?;
                for (b, _) in &desc.args {
                    let r = self.ledger.get_mut(*b).unwrap();
                    r.busy_until = r.busy_until.max(tok.end);
                }
                Ok(tok)
            }
            TaskKind::TransferToDevice => {
                let t0 = Instant::now();
                let len = desc.staging_len;
                let copied = desc.buffer.ok_or(TaskStatus::Aborted).and_then(|b| {
                    let p = self.ensure_resident(q, b, d, now)?;
                    let dst = self.devices[d]
                        .bytes_mut(p, 0, len)
                        .map_err(|_| TaskStatus::Aborted)?;
                    if len > 0 {
                        self.arena.read_bytes(desc.staging_offset, dst);
                    }
                    Ok(b)
                });
                if len > 0 {
                    let _ = self.arena.free_offset(desc.staging_offset);
                }
                let b = copied?;
                let measured = real.then(|| t0.elapsed().as_nanos() as u64);
                self.book_transfer(b, d, stream, len, measured, now)
            }
            TaskKind::TransferFromDevice => {
                let t0 = Instant::now();
                let b = desc.buffer.ok_or(TaskStatus::Aborted)?;
                let len = desc.staging_len;
                let p = self.ensure_resident(q, b, d, now)?;
                if len > 0 {
                    let src = self.devices[d]
                        .bytes(p, 0, len)
                        .map_err(|_| TaskStatus::Aborted)?;
                    self.arena.write_bytes(desc.staging_offset, src);
                }
                let measured = real.then(|| t0.elapsed().as_nanos() as u64);
                self.book_transfer(b, d, stream, len, measured, now)
            }
        }
    }

    fn book_transfer(
        &mut self,
        b: BufferId,
        d: DeviceId,
        stream: usize,
        len: u64,
        measured: Option<u64>,
        now: u64,
    ) -> Result<CompletionToken, TaskStatus> {
        let r = self.ledger.get_mut(b).unwrap();
        let tok = self.devices[d]
            .book_transfer(stream, now.max(r.ready_at), len, measured)
            .map_err(|_| TaskStatus::Aborted)?;
        r.busy_until = r.busy_until.max(tok.end);
        Ok(tok)
    }

    /// Realizes buffer `b` on device `d` for a task of queue `q`.
    fn ensure_resident(
        &mut self,
        q: QueueId,
        b: BufferId,
        d: DeviceId,
        now: u64,
    ) -> Result<DevicePtr, TaskStatus> {
        if !self.adopt_buffer(b) {
            return Err(TaskStatus::Aborted);
        }
        let timing = *self.devices[d].timing();
        let rec = self.ledger.get_mut(b).unwrap();
        if rec.home.is_none() {
            rec.home = Some(q);
        }
        let size = rec.declared_size;
        match std::mem::replace(&mut rec.residency, Residency::Unallocated) {
            Residency::DeviceResident(p) if p.device == d => {
                rec.residency = Residency::DeviceResident(p);
                Ok(p)
            }
            Residency::DeviceResident(p) => {
                if self.devices[d].available() < size {
                    rec.residency = Residency::DeviceResident(p);
                    return Err(TaskStatus::DeviceOOM);
                }
                let mut bytes = vec![0u8; size as usize];
                let src = &mut self.devices[p.device];
                src.sync_from(p, 0, &mut bytes).unwrap();
                src.free(p).unwrap();
                let np = self.devices[d].alloc(size, Some(b)).unwrap();
                self.devices[d].sync_to(np, 0, &bytes).unwrap();
                rec.ready_at = now.max(rec.busy_until).max(rec.ready_at) + 2 * timing.transfer_ns(size);
                rec.moving_from = Some(p.device);
                rec.residency = Residency::DeviceResident(np);
                self.stats.relocations += 1;
                Ok(np)
            }
            Residency::ServerStaged(bytes) => match self.devices[d].alloc(size, Some(b)) {
                Ok(np) => {
                    self.devices[d].sync_to(np, 0, &bytes).unwrap();
                    rec.ready_at = now.max(rec.ready_at) + timing.transfer_ns(size);
                    rec.moving_from = None;
                    rec.residency = Residency::DeviceResident(np);
                    Ok(np)
                }
                Err(_) => {
                    rec.residency = Residency::ServerStaged(bytes);
                    Err(TaskStatus::DeviceOOM)
                }
            },
            Residency::Unallocated => match self.devices[d].alloc(size, Some(b)) {
                Ok(np) => {
                    rec.residency = Residency::DeviceResident(np);
                    Ok(np)
                }
                Err(_) => Err(TaskStatus::DeviceOOM),
            },
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.arena.set_server_state(ServerState::Absent);
    }
}
