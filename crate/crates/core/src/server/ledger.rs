//! Per-buffer residency and the queue binding used to build migration
//! manifests.

use std::collections::BTreeMap;

use crate::backends::{DeviceId, DevicePtr};
use crate::wire::{BufferId, QueueId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Residency {
    /// Declared only; reads observe zeros.
    Unallocated,
    /// Authoritative bytes are held in server memory.
    ServerStaged(Vec<u8>),
    DeviceResident(DevicePtr),
}

#[derive(Clone, Debug)]
pub struct BufferRecord {
    pub id: BufferId,
    pub declared_size: u64,
    /// Queue of the first task that referenced the buffer.
    pub home: Option<QueueId>,
    pub residency: Residency,
    /// Earliest instant a task may read the current copy.
    pub ready_at: u64,
    /// Source device while a move is still in flight (until `ready_at`).
    pub moving_from: Option<DeviceId>,
    /// Completion time of the last task that used the buffer.
    pub busy_until: u64,
}

impl BufferRecord {
    pub fn device(&self) -> Option<DeviceId> {
        match &self.residency {
            Residency::DeviceResident(p) => Some(p.device),
            _ => None,
        }
    }

    pub fn realized_bytes(&self) -> u64 {
        match self.residency {
            Residency::DeviceResident(_) => self.declared_size,
            _ => 0,
        }
    }
}

/// Client-invisible residency view, including the transient migrating state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidencyState {
    Unallocated,
    ServerStaged,
    DeviceResident(DeviceId),
    Migrating { from: DeviceId, to: DeviceId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub buffer: BufferId,
    pub queue: Option<QueueId>,
    pub declared_size: u64,
    pub state: ResidencyState,
}

#[derive(Debug, Default)]
pub struct Ledger {
    buffers: BTreeMap<BufferId, BufferRecord>,
    by_index: BTreeMap<u32, BufferId>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: BufferId, declared_size: u64) {
        self.by_index.insert(id.index(), id);
        self.buffers.insert(
            id,
            BufferRecord {
                id,
                declared_size,
                home: None,
                residency: Residency::Unallocated,
                ready_at: 0,
                moving_from: None,
                busy_until: 0,
            },
        );
    }

    pub fn remove(&mut self, id: BufferId) -> Option<BufferRecord> {
        if self.by_index.get(&id.index()) == Some(&id) {
            self.by_index.remove(&id.index());
        }
        self.buffers.remove(&id)
    }

    pub fn id_at(&self, index: u32) -> Option<BufferId> {
        self.by_index.get(&index).copied()
    }

    pub fn get(&self, id: BufferId) -> Option<&BufferRecord> {
        self.buffers.get(&id)
    }

    pub fn get_mut(&mut self, id: BufferId) -> Option<&mut BufferRecord> {
        self.buffers.get_mut(&id)
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &BufferRecord> {
        self.buffers.values()
    }

    pub fn records_mut(&mut self) -> impl Iterator<Item = &mut BufferRecord> {
        self.buffers.values_mut()
    }

    /// Buffers bound to `q`, in id order.
    pub fn bound_to(&self, q: QueueId) -> Vec<BufferId> {
        self.buffers
            .values()
            .filter(|r| r.home == Some(q))
            .map(|r| r.id)
            .collect()
    }

    /// Σ declared sizes realized on device `d`.
    pub fn realized_on(&self, d: DeviceId) -> u64 {
        self.buffers
            .values()
            .filter(|r| r.device() == Some(d))
            .map(|r| r.declared_size)
            .sum()
    }

    pub fn state_of(&self, id: BufferId, now: u64) -> Option<ResidencyState> {
        let r = self.buffers.get(&id)?;
        Some(match (&r.residency, r.moving_from) {
            (Residency::DeviceResident(p), Some(from)) if now < r.ready_at => {
                ResidencyState::Migrating { from, to: p.device }
            }
            (Residency::DeviceResident(p), _) => ResidencyState::DeviceResident(p.device),
            (Residency::ServerStaged(_), _) => ResidencyState::ServerStaged,
            (Residency::Unallocated, _) => ResidencyState::Unallocated,
        })
    }

    pub fn entries(&self, now: u64) -> Vec<LedgerEntry> {
        self.buffers
            .values()
            .map(|r| LedgerEntry {
                buffer: r.id,
                queue: r.home,
                declared_size: r.declared_size,
                state: self.state_of(r.id, now).unwrap(),
            })
            .collect()
    }
}
