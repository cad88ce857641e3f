//! Instrumentation log of scheduling and execution events.

use crate::backends::DeviceId;
use crate::scheduler::PriorityClass;
use crate::wire::{QueueId, TaskStatus};

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    QueueDiscovered {
        t: u64,
        queue: QueueId,
        session: u32,
        priority: PriorityClass,
    },
    Assigned {
        t: u64,
        queue: QueueId,
        device: DeviceId,
        worker: usize,
    },
    Popped {
        t: u64,
        queue: QueueId,
        seq: u64,
        device: DeviceId,
        worker: usize,
    },
    Launched {
        t: u64,
        queue: QueueId,
        seq: u64,
        device: DeviceId,
        start: u64,
        end: u64,
    },
    Completed {
        t: u64,
        queue: QueueId,
        seq: u64,
        status: TaskStatus,
    },
    Orphaned {
        t: u64,
        queue: QueueId,
        from: DeviceId,
        to: DeviceId,
    },
    Migrated {
        t: u64,
        queue: QueueId,
        from: DeviceId,
        to: DeviceId,
        bytes: u64,
        source_used_before: u64,
        source_used_after: u64,
    },
    MigrationRolledBack {
        t: u64,
        queue: QueueId,
        from: DeviceId,
        to: DeviceId,
    },
    Reserved {
        t: u64,
        device: DeviceId,
        session: u32,
    },
    Unreserved {
        t: u64,
        session: u32,
    },
    QueueReleased {
        t: u64,
        queue: QueueId,
    },
}

#[derive(Debug, Default)]
pub struct EventLog {
    enabled: bool,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        EventLog {
            enabled,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, e: impl FnOnce() -> Event) {
        if self.enabled {
            self.events.push(e());
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn take(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }
}
