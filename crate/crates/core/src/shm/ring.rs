//! Fixed-capacity single-producer/single-consumer ring stored in the arena.
//!
//! `head` counts pushes and is written only by the producer; `tail` counts
//! pops and is written only by the consumer. Each sits on its own cache
//! line. The producer fills a slot and then publishes it with a release
//! store of `head`; the consumer observes it with an acquire load.

use std::sync::atomic::Ordering;

use thiserror::Error;

use super::{AllocError, SharedArena};

pub const DEFAULT_QUEUE_CAPACITY: u64 = 1024;
pub const SLOT_SIZE: u64 = 64;

const R_CAPACITY: u64 = 0;
const R_HEAD: u64 = 64;
const R_TAIL: u64 = 128;
const R_SLOTS: u64 = 192;

/// One ring slot: where the full descriptor lives plus a sequence tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TaskRecord {
    pub descriptor: u64,
    pub sequence: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PushError {
    #[error("queue full")]
    Full,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PopError {
    #[error("queue empty")]
    Empty,
}

#[derive(Clone, Copy)]
pub struct RingQueue<'a> {
    arena: &'a SharedArena,
    base: u64,
    capacity: u64,
}

impl<'a> RingQueue<'a> {
    pub fn footprint(capacity: u64) -> u64 {
        R_SLOTS + capacity * SLOT_SIZE
    }

    /// Allocates and initializes an empty ring inside `arena`.
    pub fn create(arena: &'a SharedArena, capacity: u64) -> Result<Self, AllocError> {
        assert!(capacity > 0, "ring capacity must be positive");
        let alloc = arena.alloc(Self::footprint(capacity), 64)?;
        arena.fill(alloc.offset, R_SLOTS, 0);
        arena.write_u64(alloc.offset + R_CAPACITY, capacity);
        arena.atomic_u64(alloc.offset + R_HEAD).store(0, Ordering::Relaxed);
        arena.atomic_u64(alloc.offset + R_TAIL).store(0, Ordering::Release);
        Ok(RingQueue {
            arena,
            base: alloc.offset,
            capacity,
        })
    }

    pub fn open(arena: &'a SharedArena, base: u64) -> Self {
        let capacity = arena.read_u64(base + R_CAPACITY);
        RingQueue {
            arena,
            base,
            capacity,
        }
    }

    pub fn offset(&self) -> u64 {
        self.base
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    fn head(&self) -> &std::sync::atomic::AtomicU64 {
        self.arena.atomic_u64(self.base + R_HEAD)
    }

    fn tail(&self) -> &std::sync::atomic::AtomicU64 {
        self.arena.atomic_u64(self.base + R_TAIL)
    }

    fn slot(&self, counter: u64) -> u64 {
        self.base + R_SLOTS + (counter % self.capacity) * SLOT_SIZE
    }

    /// Number of published, unconsumed records.
    pub fn len(&self) -> u64 {
        let tail = self.tail().load(Ordering::Acquire);
        let head = self.head().load(Ordering::Acquire);
        head.saturating_sub(tail)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total records ever pushed.
    pub fn pushed(&self) -> u64 {
        self.head().load(Ordering::Acquire)
    }

    /// Total records ever popped.
    pub fn popped(&self) -> u64 {
        self.tail().load(Ordering::Acquire)
    }

    /// Producer side.
    pub fn push(&self, rec: TaskRecord) -> Result<(), PushError> {
        let head = self.head().load(Ordering::Relaxed);
        let tail = self.tail().load(Ordering::Acquire);
        if head - tail >= self.capacity {
            return Err(PushError::Full);
        }
        let s = self.slot(head);
        self.arena.write_u64(s, rec.descriptor);
        self.arena.write_u64(s + 8, rec.sequence);
        self.head().store(head + 1, Ordering::Release);
        Ok(())
    }

    /// Consumer side: oldest record without consuming it.
    pub fn peek(&self) -> Option<TaskRecord> {
        let tail = self.tail().load(Ordering::Relaxed);
        let head = self.head().load(Ordering::Acquire);
        if head == tail {
            return None;
        }
        let s = self.slot(tail);
        Some(TaskRecord {
            descriptor: self.arena.read_u64(s),
            sequence: self.arena.read_u64(s + 8),
        })
    }

    /// Consumer side.
    pub fn pop(&self) -> Result<TaskRecord, PopError> {
        let tail = self.tail().load(Ordering::Relaxed);
        let head = self.head().load(Ordering::Acquire);
        if head == tail {
            return Err(PopError::Empty);
        }
        let s = self.slot(tail);
        let rec = TaskRecord {
            descriptor: self.arena.read_u64(s),
            sequence: self.arena.read_u64(s + 8),
        };
        self.tail().store(tail + 1, Ordering::Release);
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn rec(i: u64) -> TaskRecord {
        TaskRecord {
            descriptor: i * 64,
            sequence: i,
        }
    }

    #[test]
    fn push_until_full() {
        let a = SharedArena::create_local("ring", 4 << 20).unwrap();
        let q = RingQueue::create(&a, 4).unwrap();
        q.push(rec(0)).unwrap();
        assert_eq!(q.len(), 1);
        for i in 1..4 {
            q.push(rec(i)).unwrap();
        }
        assert_eq!(q.push(rec(4)), Err(PushError::Full));
        assert_eq!(q.len(), 4);
        assert_eq!(q.pop(), Ok(rec(0)));
        q.push(rec(4)).unwrap();
    }

    #[test]
    fn pop_empty_and_single() {
        let a = SharedArena::create_local("ring", 4 << 20).unwrap();
        let q = RingQueue::create(&a, DEFAULT_QUEUE_CAPACITY).unwrap();
        assert_eq!(q.pop(), Err(PopError::Empty));
        assert_eq!(q.peek(), None);
        q.push(rec(9)).unwrap();
        assert_eq!(q.peek(), Some(rec(9)));
        assert_eq!(q.pop(), Ok(rec(9)));
        assert_eq!(q.pop(), Err(PopError::Empty));
    }

    #[test]
    fn fifo_10k_through_small_ring() {
        let a = SharedArena::create_local("ring", 4 << 20).unwrap();
        let q = RingQueue::create(&a, 16).unwrap();
        let mut out = Vec::new();
        let mut next = 0u64;
        while out.len() < 10_000 {
            while next < 10_000 && q.push(rec(next)).is_ok() {
                next += 1;
            }
            while let Ok(r) = q.pop() {
                out.push(r.sequence);
            }
        }
        assert!(out.iter().copied().eq(0..10_000));
    }

    #[test]
    fn threaded_spsc_preserves_order() {
        let a = Arc::new(SharedArena::create_local("ring", 4 << 20).unwrap());
        let base = RingQueue::create(&a, 64).unwrap().offset();
        const N: u64 = 200_000;
        let producer = {
            let a = a.clone();
            std::thread::spawn(move || {
                let q = RingQueue::open(&a, base);
                let mut i = 0;
                while i < N {
                    if q.push(rec(i)).is_ok() {
                        i += 1;
                    } else {
                        std::thread::yield_now();
                    }
                }
            })
        };
        let q = RingQueue::open(&a, base);
        let mut expect = 0;
        while expect < N {
            match q.pop() {
                Ok(r) => {
                    assert_eq!(r, rec(expect));
                    expect += 1;
                }
                Err(PopError::Empty) => std::thread::yield_now(),
            }
        }
        producer.join().unwrap();
        assert!(q.is_empty());
    }

    proptest! {
        #[test]
        fn interleaved_ops_match_vecdeque(ops in proptest::collection::vec(any::<bool>(), 0..400), cap in 1u64..32) {
            let a = SharedArena::create_local("ring", 2 << 20).unwrap();
            let q = RingQueue::create(&a, cap).unwrap();
            let mut model = std::collections::VecDeque::new();
            let mut n = 0;
            for push in ops {
                if push {
                    let r = q.push(rec(n));
                    if model.len() as u64 == cap {
                        prop_assert_eq!(r, Err(PushError::Full));
                    } else {
                        prop_assert!(r.is_ok());
                        model.push_back(n);
                    }
                    n += 1;
                } else {
                    match model.pop_front() {
                        Some(v) => prop_assert_eq!(q.pop(), Ok(rec(v))),
                        None => prop_assert_eq!(q.pop(), Err(PopError::Empty)),
                    }
                }
                prop_assert!(q.len() <= cap);
                prop_assert_eq!(q.len(), model.len() as u64);
            }
        }
    }
}
