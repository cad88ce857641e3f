//! Queue directory and buffer table.
//!
//! Both tables live at fixed offsets below `queue_directory_root` and are
//! claimed by clients with a compare-and-swap on the entry state word. The
//! server learns about changes by watching the header's control generation.

use std::sync::atomic::Ordering;

use thiserror::Error;

use super::SharedArena;

pub const QUEUE_DIRECTORY_CAPACITY: u32 = 256;
pub const BUFFER_TABLE_CAPACITY: u32 = 4096;

const QUEUE_ENTRY_SIZE: u64 = 64;
const BUFFER_ENTRY_SIZE: u64 = 32;
const ROOT_SIZE: u64 = 64;

// queue entry
const Q_STATE: u64 = 0;
const Q_OWNER: u64 = 4;
const Q_PRIORITY: u64 = 8;
const Q_GEN: u64 = 12;
const Q_RING: u64 = 16;

// buffer entry
const B_STATE: u64 = 0;
const B_OWNER: u64 = 4;
const B_SIZE: u64 = 8;
const B_GEN: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum QueueEntryState {
    Free = 0,
    Initializing = 1,
    Active = 2,
    Releasing = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum BufferEntryState {
    Free = 0,
    Initializing = 1,
    Live = 2,
    Freeing = 3,
}

impl QueueEntryState {
    fn from_raw(v: u32) -> Self {
        match v {
            1 => Self::Initializing,
            2 => Self::Active,
            3 => Self::Releasing,
            _ => Self::Free,
        }
    }
}

impl BufferEntryState {
    fn from_raw(v: u32) -> Self {
        match v {
            1 => Self::Initializing,
            2 => Self::Live,
            3 => Self::Freeing,
            _ => Self::Free,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DirectoryError {
    #[error("queue directory full")]
    DirectoryFull,
    #[error("buffer handle table full")]
    HandleTableFull,
}

/// Snapshot of a queue directory entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueSlot {
    pub index: u32,
    pub state: QueueEntryState,
    pub owner: u32,
    pub priority: u32,
    pub generation: u32,
    pub ring_offset: u64,
}

/// Snapshot of a buffer table entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferSlot {
    pub index: u32,
    pub state: BufferEntryState,
    pub owner: u32,
    pub declared_size: u64,
    pub generation: u32,
}

pub(crate) fn directory_size() -> u64 {
    ROOT_SIZE
        + QUEUE_DIRECTORY_CAPACITY as u64 * QUEUE_ENTRY_SIZE
        + BUFFER_TABLE_CAPACITY as u64 * BUFFER_ENTRY_SIZE
}

pub(crate) fn init(arena: &SharedArena, root: u64) {
    arena.fill(root, directory_size(), 0);
    arena.write_u32(root, QUEUE_DIRECTORY_CAPACITY);
    arena.write_u32(root + 4, BUFFER_TABLE_CAPACITY);
    arena.write_u64(root + 8, root + ROOT_SIZE);
    arena.write_u64(
        root + 16,
        root + ROOT_SIZE + QUEUE_DIRECTORY_CAPACITY as u64 * QUEUE_ENTRY_SIZE,
    );
}

impl SharedArena {
    fn queue_entry(&self, index: u32) -> u64 {
        assert!(index < QUEUE_DIRECTORY_CAPACITY);
        self.read_u64(self.queue_directory_root() + 8) + index as u64 * QUEUE_ENTRY_SIZE
    }

    fn buffer_entry(&self, index: u32) -> u64 {
        assert!(index < BUFFER_TABLE_CAPACITY);
        self.read_u64(self.queue_directory_root() + 16) + index as u64 * BUFFER_ENTRY_SIZE
    }

    /// Claims a free directory entry; the caller must finish with
    /// [`SharedArena::publish_queue`].
    pub(crate) fn claim_queue_slot(&self) -> Result<u32, DirectoryError> {
        for index in 0..QUEUE_DIRECTORY_CAPACITY {
            let e = self.queue_entry(index);
            if self
                .atomic_u32(e + Q_STATE)
                .compare_exchange(
                    QueueEntryState::Free as u32,
                    QueueEntryState::Initializing as u32,
                    Ordering::AcqRel,
                    Ordering::Relaxed,
                )
                .is_ok()
            {
                return Ok(index);
            }
        }
        Err(DirectoryError::DirectoryFull)
    }

    /// Fills a claimed entry and makes it visible as active. Returns the new
    /// generation.
    pub(crate) fn publish_queue(&self, index: u32, owner: u32, priority: u32, ring: u64) -> u32 {
        let e = self.queue_entry(index);
        self.write_u32(e + Q_OWNER, owner);
        self.write_u32(e + Q_PRIORITY, priority);
        self.write_u64(e + Q_RING, ring);
        let gen = self.atomic_u32(e + Q_GEN).fetch_add(1, Ordering::AcqRel) + 1;
        self.atomic_u32(e + Q_STATE)
            .store(QueueEntryState::Active as u32, Ordering::Release);
        self.bump_control_generation();
        gen
    }

    pub(crate) fn abandon_queue_claim(&self, index: u32) {
        let e = self.queue_entry(index);
        self.atomic_u32(e + Q_STATE)
            .store(QueueEntryState::Free as u32, Ordering::Release);
    }

    pub(crate) fn set_queue_state(&self, index: u32, from: QueueEntryState, to: QueueEntryState) -> bool {
        let e = self.queue_entry(index);
        let ok = self
            .atomic_u32(e + Q_STATE)
            .compare_exchange(from as u32, to as u32, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok();
        if ok {
            self.bump_control_generation();
        }
        ok
    }

    pub fn queue_slot(&self, index: u32) -> QueueSlot {
        let e = self.queue_entry(index);
        let state = QueueEntryState::from_raw(self.atomic_u32(e + Q_STATE).load(Ordering::Acquire));
        QueueSlot {
            index,
            state,
            owner: self.read_u32(e + Q_OWNER),
            priority: self.read_u32(e + Q_PRIORITY),
            generation: self.atomic_u32(e + Q_GEN).load(Ordering::Acquire),
            ring_offset: self.read_u64(e + Q_RING),
        }
    }

    pub(crate) fn claim_buffer_slot(&self) -> Result<u32, DirectoryError> {
        for index in 0..BUFFER_TABLE_CAPACITY {
            let e = self.buffer_entry(index);
            if self
                .atomic_u32(e + B_STATE)
                .compare_exchange(
                    BufferEntryState::Free as u32,
                    BufferEntryState::Initializing as u32,
                    Ordering::AcqRel,
                    Ordering::Relaxed,
                )
                .is_ok()
            {
                return Ok(index);
            }
        }
        Err(DirectoryError::HandleTableFull)
    }

    pub(crate) fn publish_buffer(&self, index: u32, owner: u32, declared_size: u64) -> u32 {
        let e = self.buffer_entry(index);
        self.write_u32(e + B_OWNER, owner);
        self.write_u64(e + B_SIZE, declared_size);
        let gen = self.atomic_u32(e + B_GEN).fetch_add(1, Ordering::AcqRel) + 1;
        self.atomic_u32(e + B_STATE)
            .store(BufferEntryState::Live as u32, Ordering::Release);
        self.bump_control_generation();
        gen
    }

    pub(crate) fn set_buffer_state(&self, index: u32, from: BufferEntryState, to: BufferEntryState) -> bool {
        let e = self.buffer_entry(index);
        let ok = self
            .atomic_u32(e + B_STATE)
            .compare_exchange(from as u32, to as u32, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok();
        if ok {
            self.bump_control_generation();
        }
        ok
    }

    pub fn buffer_slot(&self, index: u32) -> BufferSlot {
        let e = self.buffer_entry(index);
        let state = BufferEntryState::from_raw(self.atomic_u32(e + B_STATE).load(Ordering::Acquire));
        BufferSlot {
            index,
            state,
            owner: self.read_u32(e + B_OWNER),
            declared_size: self.read_u64(e + B_SIZE),
            generation: self.atomic_u32(e + B_GEN).load(Ordering::Acquire),
        }
    }
}
