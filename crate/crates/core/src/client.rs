//! Application-facing API.
//!
//! The eight calls (`a_acquire`, `a_release`, `a_allocate`, `a_free`,
//! `a_sync_to`, `a_sync_from`, `a_issue`, `a_wait`) are implemented purely
//! over the shared arena: they claim directory entries, write descriptors
//! and push records into queue rings. Nothing here names a device, and the
//! server decides where and when everything runs.
//!
//! The surface deliberately has no way to ask where a buffer lives or how
//! many devices exist:
//!
//! ```compile_fail
//! # fn f(s: &arax::client::Session) {
//! let _ = s.device_count();
//! # }
//! ```
//!
//! ```compile_fail
//! # fn f(b: &arax::client::TaskBuffer) {
//! let _ = b.residency();
//! # }
//! ```

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::scheduler::PriorityClass;
use crate::shm::{
    AllocError, ArenaError, BufferEntryState, DirectoryError, QueueEntryState, RingQueue,
    SharedArena, TaskRecord, DEFAULT_QUEUE_CAPACITY,
};
use crate::wire::{
    self, BufferId, Direction, QueueId, TaskKind, TaskStatus, WireDescriptor, MAX_KERNEL_NAME,
    MAX_SCALAR_BYTES, MAX_TASK_ARGS,
};

pub use crate::wire::{Direction as ArgDirection, TaskStatus as Status};

pub const ENV_SHM: &str = "ARAX_SHM";
pub const ENV_PRIORITY: &str = "ARAX_PRIORITY";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error("arena allocation failed: {0}")]
    Staging(#[from] AllocError),
    #[error("buffer size must be > 0")]
    ZeroSize,
    #[error("queue busy: {0} task(s) in flight")]
    QueueBusy(usize),
    #[error("queue full")]
    QueueFull,
    #[error("unknown or released queue {0}")]
    InvalidQueue(QueueId),
    #[error("dead buffer handle {0}")]
    DeadHandle(BufferId),
    #[error("double free of buffer {0}")]
    DoubleFree(BufferId),
    #[error("buffer {0} is referenced by an in-flight task")]
    BufferInFlight(BufferId),
    #[error("transfer of {len} bytes exceeds declared buffer size {declared}")]
    Oversize { len: u64, declared: u64 },
    #[error("compute task needs a kernel name")]
    EmptyKernelName,
    #[error("kernel name longer than {MAX_KERNEL_NAME} bytes")]
    KernelNameTooLong,
    #[error("scalar blob of {0} bytes exceeds {MAX_SCALAR_BYTES}")]
    ScalarsTooLarge(usize),
    #[error("more than {MAX_TASK_ARGS} task arguments")]
    TooManyArgs,
    #[error("buffer {0} passed twice to one task")]
    DuplicateArg(BufferId),
    #[error("invalid task handle")]
    InvalidHandle,
    #[error("no progress possible: the server has nothing scheduled")]
    Stalled,
    #[error("environment: {0}")]
    Env(String),
}

/// Outcome of one call into an in-process progress hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Advanced,
    Stalled,
}

/// Called instead of sleeping while a session waits, when the server runs
/// in the same thread (virtual-clock deployments).
pub type ProgressHook = Arc<dyn Fn() -> Progress + Send + Sync>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TaskQueueHandle {
    id: QueueId,
    client: u32,
}

impl TaskQueueHandle {
    pub fn id(&self) -> QueueId {
        self.id
    }
}

impl fmt::Debug for TaskQueueHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaskQueue({})", self.id)
    }
}

/// Opaque data handle. Placement is never visible to the client.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TaskBuffer {
    id: BufferId,
    declared_size: u64,
}

impl TaskBuffer {
    pub fn id(&self) -> BufferId {
        self.id
    }

    pub fn declared_size(&self) -> u64 {
        self.declared_size
    }
}

impl fmt::Debug for TaskBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaskBuffer({}, {} B)", self.id, self.declared_size)
    }
}

/// A compute request: kernel name, ordered buffer arguments and a small
/// scalar blob. There is no launch geometry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskDescriptor {
    kernel: String,
    args: Vec<(BufferId, Direction)>,
    scalars: Vec<u8>,
}

impl TaskDescriptor {
    pub fn new(kernel: impl Into<String>) -> Self {
        TaskDescriptor {
            kernel: kernel.into(),
            ..Default::default()
        }
    }

    pub fn arg(mut self, buf: &TaskBuffer, dir: Direction) -> Self {
        self.args.push((buf.id, dir));
        self
    }

    pub fn input(self, buf: &TaskBuffer) -> Self {
        self.arg(buf, Direction::In)
    }

    pub fn output(self, buf: &TaskBuffer) -> Self {
        self.arg(buf, Direction::Out)
    }

    pub fn inout(self, buf: &TaskBuffer) -> Self {
        self.arg(buf, Direction::InOut)
    }

    pub fn scalars(mut self, blob: impl Into<Vec<u8>>) -> Self {
        self.scalars = blob.into();
        self
    }

    pub fn scalar_i32(mut self, v: i32) -> Self {
        self.scalars.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn scalar_u64(mut self, v: u64) -> Self {
        self.scalars.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn scalar_f32(mut self, v: f32) -> Self {
        self.scalars.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn kernel(&self) -> &str {
        &self.kernel
    }

    pub fn scalar_bytes(&self) -> &[u8] {
        &self.scalars
    }

    fn validate(&self) -> Result<(), ClientError> {
        if self.kernel.is_empty() {
            return Err(ClientError::EmptyKernelName);
        }
        if self.kernel.len() > MAX_KERNEL_NAME {
            return Err(ClientError::KernelNameTooLong);
        }
        if self.scalars.len() > MAX_SCALAR_BYTES {
            return Err(ClientError::ScalarsTooLarge(self.scalars.len()));
        }
        if self.args.len() > MAX_TASK_ARGS {
            return Err(ClientError::TooManyArgs);
        }
        for (i, (id, _)) in self.args.iter().enumerate() {
            if self.args[..i].iter().any(|(other, _)| other == id) {
                return Err(ClientError::DuplicateArg(*id));
            }
        }
        Ok(())
    }
}

enum Readback<'d> {
    None,
    Borrowed(&'d mut [u8]),
    Owned(Vec<u8>),
}

/// Handle for an issued task. Transfers from the device carry their
/// destination and are filled in by [`Session::a_wait`].
pub struct TaskHandle<'d> {
    client: u32,
    seq: u64,
    desc: u64,
    status: Option<TaskStatus>,
    readback: Readback<'d>,
    detached: Arc<Mutex<Detached>>,
}

impl<'d> TaskHandle<'d> {
    pub fn sequence(&self) -> u64 {
        self.seq
    }

    /// Final status if the handle has already been waited on.
    pub fn status(&self) -> Option<TaskStatus> {
        self.status
    }

    /// Data read back by an owned `a_sync_from_vec` transfer.
    pub fn into_output(mut self) -> Option<Vec<u8>> {
        match std::mem::replace(&mut self.readback, Readback::None) {
            Readback::Owned(v) if self.status == Some(TaskStatus::Success) => Some(v),
            _ => None,
        }
    }
}

/// A handle dropped before completion hands its task back to the session,
/// which reclaims the descriptor once the task finishes.
impl Drop for TaskHandle<'_> {
    fn drop(&mut self) {
        if self.status.is_none() {
            self.detached
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .seqs
                .push(self.seq);
        }
    }
}

impl fmt::Debug for TaskHandle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskHandle")
            .field("seq", &self.seq)
            .field("status", &self.status)
            .finish()
    }
}

#[derive(Default)]
struct Detached {
    seqs: Vec<u64>,
    sweep_at: usize,
}

struct LocalTask {
    desc: u64,
    queue: QueueId,
    buffers: Vec<BufferId>,
    read_staging: Option<(u64, u64)>,
}

#[derive(Default)]
struct SessionState {
    queues: HashMap<QueueId, u64>,
    buffers: HashMap<BufferId, u64>,
    tasks: HashMap<u64, LocalTask>,
}

/// Attachment of one client to an arena.
pub struct Session {
    arena: Arc<SharedArena>,
    client_id: u32,
    priority: PriorityClass,
    state: Mutex<SessionState>,
    next_seq: AtomicU64,
    progress: Option<ProgressHook>,
    detached: Arc<Mutex<Detached>>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("client_id", &self.client_id)
            .field("priority", &self.priority)
            .finish()
    }
}

struct Backoff {
    delay: Duration,
}

impl Backoff {
    const MAX: Duration = Duration::from_millis(1);

    fn new() -> Self {
        Backoff {
            delay: Duration::from_micros(1),
        }
    }

    fn wait(&mut self, hook: Option<&ProgressHook>) -> Result<(), ClientError> {
        if let Some(h) = hook {
            return match h() {
                Progress::Advanced => Ok(()),
                Progress::Stalled => Err(ClientError::Stalled),
            };
        }
        if self.delay <= Duration::from_micros(4) {
            for _ in 0..(self.delay.as_nanos() as u32 / 10).max(1) {
                std::hint::spin_loop();
            }
        } else {
            std::thread::sleep(self.delay);
        }
        self.delay = (self.delay * 2).min(Self::MAX);
        Ok(())
    }
}

impl Session {
    pub fn attach(arena: Arc<SharedArena>, priority: PriorityClass) -> Self {
        let client_id = arena.next_client_id();
        Session {
            arena,
            client_id,
            priority,
            state: Mutex::new(SessionState::default()),
            next_seq: AtomicU64::new(1),
            progress: None,
            detached: Arc::default(),
        }
    }

    /// Attaches with a hook that drives an in-process server while waiting.
    pub fn attach_with_progress(
        arena: Arc<SharedArena>,
        priority: PriorityClass,
        hook: ProgressHook,
    ) -> Self {
        let mut s = Self::attach(arena, priority);
        s.progress = Some(hook);
        s
    }

    /// Attaches to the segment named by `ARAX_SHM`, with the priority from
    /// `ARAX_PRIORITY` (default low).
    pub fn connect_from_env() -> Result<Self, ClientError> {
        let name = std::env::var(ENV_SHM)
            .map_err(|_| ClientError::Env(format!("{ENV_SHM} is not set")))?;
        let priority = match std::env::var(ENV_PRIORITY) {
            Ok(v) => v.parse().map_err(ClientError::Env)?,
            Err(_) => PriorityClass::Low,
        };
        let arena = SharedArena::attach(&name)?;
        Ok(Self::attach(Arc::new(arena), priority))
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    pub fn priority(&self) -> PriorityClass {
        self.priority
    }

    fn state(&self) -> std::sync::MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    // ---- queues ----

    /// Acquires a new, empty task queue.
    pub fn a_acquire(&self) -> Result<TaskQueueHandle, ClientError> {
        let index = self.arena.claim_queue_slot()?;
        let ring = match RingQueue::create(&self.arena, DEFAULT_QUEUE_CAPACITY) {
            Ok(r) => r.offset(),
            Err(e) => {
                self.arena.abandon_queue_claim(index);
                return Err(e.into());
            }
        };
        let gen = self
            .arena
            .publish_queue(index, self.client_id, self.priority.code(), ring);
        let id = QueueId::new(index, gen);
        self.state().queues.insert(id, ring);
        Ok(TaskQueueHandle {
            id,
            client: self.client_id,
        })
    }

    /// Releases a queue whose tasks have all completed.
    pub fn a_release(&self, q: &TaskQueueHandle) -> Result<(), ClientError> {
        let mut st = self.state();
        if q.client != self.client_id || !st.queues.contains_key(&q.id) {
            return Err(ClientError::InvalidQueue(q.id));
        }
        let busy = st
            .tasks
            .values()
            .filter(|t| t.queue == q.id && !wire::load_status(&self.arena, t.desc).is_final())
            .count();
        if busy > 0 {
            return Err(ClientError::QueueBusy(busy));
        }
        if !self.arena.set_queue_state(
            q.id.index(),
            QueueEntryState::Active,
            QueueEntryState::Releasing,
        ) {
            return Err(ClientError::InvalidQueue(q.id));
        }
        st.queues.remove(&q.id);
        Ok(())
    }

    // ---- buffers ----

    /// Records a buffer of `size` bytes. No device memory is reserved.
    pub fn a_allocate(&self, size: u64) -> Result<TaskBuffer, ClientError> {
        if size == 0 {
            return Err(ClientError::ZeroSize);
        }
        let index = self.arena.claim_buffer_slot()?;
        let gen = self.arena.publish_buffer(index, self.client_id, size);
        let id = BufferId::new(index, gen);
        self.state().buffers.insert(id, size);
        Ok(TaskBuffer {
            id,
            declared_size: size,
        })
    }

    pub fn a_free(&self, buf: &TaskBuffer) -> Result<(), ClientError> {
        let mut st = self.state();
        if !st.buffers.contains_key(&buf.id) {
            return Err(if self.buffer_live(buf.id) {
                ClientError::DeadHandle(buf.id)
            } else {
                ClientError::DoubleFree(buf.id)
            });
        }
        let referenced = st.tasks.values().any(|t| {
            t.buffers.contains(&buf.id) && !wire::load_status(&self.arena, t.desc).is_final()
        });
        if referenced {
            return Err(ClientError::BufferInFlight(buf.id));
        }
        if !self.arena.set_buffer_state(
            buf.id.index(),
            BufferEntryState::Live,
            BufferEntryState::Freeing,
        ) {
            return Err(ClientError::DoubleFree(buf.id));
        }
        st.buffers.remove(&buf.id);
        Ok(())
    }

    fn buffer_live(&self, id: BufferId) -> bool {
        let slot = self.arena.buffer_slot(id.index());
        slot.state == BufferEntryState::Live && slot.generation == id.generation()
    }

    fn check_buffer(&self, buf: &TaskBuffer, len: u64) -> Result<(), ClientError> {
        if !self.buffer_live(buf.id) {
            return Err(ClientError::DeadHandle(buf.id));
        }
        if len > buf.declared_size {
            return Err(ClientError::Oversize {
                len,
                declared: buf.declared_size,
            });
        }
        Ok(())
    }

    // ---- tasks ----

    /// Copies `src` into the arena now and enqueues its transfer to wherever
    /// the queue ends up running.
    pub fn a_sync_to(
        &self,
        q: &TaskQueueHandle,
        buf: &TaskBuffer,
        src: &[u8],
    ) -> Result<TaskHandle<'static>, ClientError> {
        self.check_buffer(buf, src.len() as u64)?;
        let staging = self.stage(src.len() as u64)?;
        if staging != 0 {
            self.arena.write_bytes(staging, src);
        }
        let wire = self.transfer(TaskKind::TransferToDevice, q, buf, staging, src.len() as u64);
        self.submit(q, wire, vec![buf.id], None, Readback::None, true)
            .inspect_err(|_| self.release_staging(staging))
    }

    /// Enqueues a read of the buffer's current contents into `dst`; `dst` is
    /// filled when the returned handle is waited on.
    pub fn a_sync_from<'d>(
        &self,
        q: &TaskQueueHandle,
        buf: &TaskBuffer,
        dst: &'d mut [u8],
    ) -> Result<TaskHandle<'d>, ClientError> {
        let len = dst.len() as u64;
        self.sync_from_inner(q, buf, len, Readback::Borrowed(dst))
    }

    /// Like [`Session::a_sync_from`] but the handle owns the destination;
    /// take it with [`TaskHandle::into_output`].
    pub fn a_sync_from_vec(
        &self,
        q: &TaskQueueHandle,
        buf: &TaskBuffer,
        len: u64,
    ) -> Result<TaskHandle<'static>, ClientError> {
        self.sync_from_inner(q, buf, len, Readback::Owned(vec![0; len as usize]))
    }

    fn sync_from_inner<'d>(
        &self,
        q: &TaskQueueHandle,
        buf: &TaskBuffer,
        len: u64,
        readback: Readback<'d>,
    ) -> Result<TaskHandle<'d>, ClientError> {
        self.check_buffer(buf, len)?;
        let staging = self.stage(len)?;
        let wire = self.transfer(TaskKind::TransferFromDevice, q, buf, staging, len);
        self.submit(q, wire, vec![buf.id], Some((staging, len)), readback, true)
            .inspect_err(|_| self.release_staging(staging))
    }

    /// Appends a compute task to `q` and returns before it runs.
    pub fn a_issue(
        &self,
        q: &TaskQueueHandle,
        desc: &TaskDescriptor,
    ) -> Result<TaskHandle<'static>, ClientError> {
        self.issue(q, desc, true)
    }

    /// Non-blocking variant of [`Session::a_issue`]: returns
    /// [`ClientError::QueueFull`] instead of backing off.
    pub fn try_issue(
        &self,
        q: &TaskQueueHandle,
        desc: &TaskDescriptor,
    ) -> Result<TaskHandle<'static>, ClientError> {
        self.issue(q, desc, false)
    }

    fn issue(
        &self,
        q: &TaskQueueHandle,
        desc: &TaskDescriptor,
        blocking: bool,
    ) -> Result<TaskHandle<'static>, ClientError> {
        desc.validate()?;
        for (id, _) in &desc.args {
            if !self.buffer_live(*id) {
                return Err(ClientError::DeadHandle(*id));
            }
        }
        let wire = WireDescriptor {
            kind: TaskKind::Compute,
            sequence: 0,
            queue: q.id,
            buffer: None,
            staging_offset: 0,
            staging_len: 0,
            kernel: desc.kernel.clone(),
            args: desc.args.clone(),
            scalars: desc.scalars.clone(),
        };
        let buffers = desc.args.iter().map(|(id, _)| *id).collect();
        self.submit(q, wire, buffers, None, Readback::None, blocking)
    }

    /// Blocks until the task's status word is final.
    pub fn a_wait(&self, t: &mut TaskHandle<'_>) -> Result<TaskStatus, ClientError> {
        if let Some(s) = t.status {
            return Ok(s);
        }
        self.check_handle(t)?;
        let mut backoff = Backoff::new();
        loop {
            let s = wire::load_status(&self.arena, t.desc);
            if s.is_final() {
                return Ok(self.finalize(t, s));
            }
            backoff.wait(self.progress.as_ref())?;
        }
    }

    /// Non-blocking completion check; finalizes the handle like `a_wait`
    /// when the task is done.
    pub fn a_poll(&self, t: &mut TaskHandle<'_>) -> Result<Option<TaskStatus>, ClientError> {
        if let Some(s) = t.status {
            return Ok(Some(s));
        }
        self.check_handle(t)?;
        let s = wire::load_status(&self.arena, t.desc);
        Ok(s.is_final().then(|| self.finalize(t, s)))
    }

    fn check_handle(&self, t: &TaskHandle<'_>) -> Result<(), ClientError> {
        if t.client != self.client_id || !self.state().tasks.contains_key(&t.seq) {
            return Err(ClientError::InvalidHandle);
        }
        Ok(())
    }

    fn finalize(&self, t: &mut TaskHandle<'_>, status: TaskStatus) -> TaskStatus {
        let local = self.state().tasks.remove(&t.seq);
        if let Some(local) = local {
            if let Some((off, len)) = local.read_staging {
                if status == TaskStatus::Success && len > 0 {
                    match &mut t.readback {
                        Readback::Borrowed(dst) => self.arena.read_bytes(off, dst),
                        Readback::Owned(v) => self.arena.read_bytes(off, v),
                        Readback::None => {}
                    }
                }
                self.release_staging(off);
            }
            let _ = self.arena.free_offset(local.desc);
        }
        t.status = Some(status);
        status
    }

    fn stage(&self, len: u64) -> Result<u64, ClientError> {
        if len == 0 {
            return Ok(0);
        }
        Ok(self.arena.alloc(len, 64)?.offset)
    }

    fn release_staging(&self, off: u64) {
        if off != 0 {
            let _ = self.arena.free_offset(off);
        }
    }

    fn transfer(
        &self,
        kind: TaskKind,
        q: &TaskQueueHandle,
        buf: &TaskBuffer,
        staging: u64,
        len: u64,
    ) -> WireDescriptor {
        WireDescriptor {
            kind,
            sequence: 0,
            queue: q.id,
            buffer: Some(buf.id),
            staging_offset: staging,
            staging_len: len,
            kernel: String::new(),
            args: Vec::new(),
            scalars: Vec::new(),
        }
    }

    fn submit<'d>(
        &self,
        q: &TaskQueueHandle,
        mut wire: WireDescriptor,
        buffers: Vec<BufferId>,
        read_staging: Option<(u64, u64)>,
        readback: Readback<'d>,
        blocking: bool,
    ) -> Result<TaskHandle<'d>, ClientError> {
        self.reclaim_detached(false);
        let seq = self.next_seq.fetch_add(1, Ordering::Relaxed);
        wire.sequence = seq;
        let desc = self.arena.alloc(wire.encoded_len(), 64)?.offset;
        wire.write(&self.arena, desc);
        let ring = {
            let mut st = self.state();
            let Some(&ring) = st.queues.get(&q.id).filter(|_| q.client == self.client_id) else {
                drop(st);
                let _ = self.arena.free_offset(desc);
                return Err(ClientError::InvalidQueue(q.id));
            };
            st.tasks.insert(
                seq,
                LocalTask {
                    desc,
                    queue: q.id,
                    buffers,
                    read_staging,
                },
            );
            ring
        };
        let ring = RingQueue::open(&self.arena, ring);
        let record = TaskRecord {
            descriptor: desc,
            sequence: seq,
        };
        let mut backoff = Backoff::new();
        while ring.push(record).is_err() {
            let waited = if blocking {
                backoff.wait(self.progress.as_ref())
            } else {
                Err(ClientError::QueueFull)
            };
            if let Err(e) = waited {
                self.state().tasks.remove(&seq);
                let _ = self.arena.free_offset(desc);
                return Err(e);
            }
        }
        Ok(TaskHandle {
            client: self.client_id,
            seq,
            desc,
            status: None,
            readback,
            detached: self.detached.clone(),
        })
    }

    /// Number of issued tasks whose handle is alive and not yet waited on,
    /// plus dropped handles whose task is still running.
    pub fn outstanding_tasks(&self) -> usize {
        self.reclaim_detached(true);
        self.state().tasks.len()
    }

    /// Frees descriptors of finished tasks whose handles were dropped. The
    /// sweep threshold doubles with the number still running so issuing
    /// stays amortized O(1).
    fn reclaim_detached(&self, force: bool) {
        let mut detached = self.detached.lock().unwrap_or_else(|e| e.into_inner());
        if detached.seqs.is_empty() || (!force && detached.seqs.len() < detached.sweep_at) {
            return;
        }
        let mut st = self.state();
        detached.seqs.retain(|seq| {
            let Some(t) = st.tasks.get(seq) else {
                return false;
            };
            if !wire::load_status(&self.arena, t.desc).is_final() {
                return true;
            }
            let t = st.tasks.remove(seq).unwrap();
            if let Some((off, _)) = t.read_staging {
                if off != 0 {
                    let _ = self.arena.free_offset(off);
                }
            }
            let _ = self.arena.free_offset(t.desc);
            false
        });
        detached.sweep_at = (2 * detached.seqs.len()).max(256);
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let st = self.state.get_mut().unwrap_or_else(|e| e.into_inner());
        let mut pending = 0;
        for t in st.tasks.values() {
            if wire::load_status(&self.arena, t.desc).is_final() {
                if let Some((off, _)) = t.read_staging {
                    if off != 0 {
                        let _ = self.arena.free_offset(off);
                    }
                }
                let _ = self.arena.free_offset(t.desc);
            } else {
                pending += 1;
            }
        }
        if pending > 0 {
            log::warn!(
                "session {} dropped with {pending} pending task(s); their descriptors are leaked",
                self.client_id
            );
        }
        for (id, _) in st.queues.drain() {
            self.arena
                .set_queue_state(id.index(), QueueEntryState::Active, QueueEntryState::Releasing);
        }
        for (id, _) in st.buffers.drain() {
            self.arena
                .set_buffer_state(id.index(), BufferEntryState::Live, BufferEntryState::Freeing);
        }
    }
}
