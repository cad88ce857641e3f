//! Identifiers, status codes and the in-arena task descriptor layout shared
//! by the client library and the server.
//!
//! Descriptor layout (little-endian, 64-byte aligned allocation):
//!
//! ```text
//! 0   kind u32          4   status i32 (0 pending, 1 success, <0 error)
//! 8   sequence u64      16  queue id u64
//! 24  buffer id u64     32  staging offset u64      40 staging length u64
//! 48  arg count u32     52  scalar length u32       56 kernel name length u32
//! 64  kernel name [64]
//! 128 args: arg count × { buffer id u64, direction u32, reserved u32 }
//! ..  scalar blob
//! ```

use std::fmt;
use std::sync::atomic::Ordering;

use crate::shm::SharedArena;

pub const MAX_KERNEL_NAME: usize = 63;
pub const MAX_SCALAR_BYTES: usize = 4096;
pub const MAX_TASK_ARGS: usize = 64;

const D_KIND: u64 = 0;
const D_STATUS: u64 = 4;
const D_SEQ: u64 = 8;
const D_QUEUE: u64 = 16;
const D_BUFFER: u64 = 24;
const D_STAGING_OFF: u64 = 32;
const D_STAGING_LEN: u64 = 40;
const D_NARGS: u64 = 48;
const D_SCALAR_LEN: u64 = 52;
const D_NAME_LEN: u64 = 56;
const D_NAME: u64 = 64;
const D_ARGS: u64 = 128;
const ARG_SIZE: u64 = 16;

macro_rules! handle_id {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(u64);

        impl $name {
            pub const fn new(index: u32, generation: u32) -> Self {
                $name(((generation as u64) << 32) | index as u64)
            }

            pub const fn from_raw(raw: u64) -> Self {
                $name(raw)
            }

            pub const fn raw(self) -> u64 {
                self.0
            }

            pub const fn index(self) -> u32 {
                self.0 as u32
            }

            pub const fn generation(self) -> u32 {
                (self.0 >> 32) as u32
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({}#{})", stringify!($name), self.index(), self.generation())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}#{}", self.index(), self.generation())
            }
        }
    };
}

handle_id!(QueueId);
handle_id!(BufferId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum TaskKind {
    Compute = 0,
    TransferToDevice = 1,
    TransferFromDevice = 2,
}

impl TaskKind {
    fn from_raw(v: u32) -> Option<Self> {
        match v {
            0 => Some(Self::Compute),
            1 => Some(Self::TransferToDevice),
            2 => Some(Self::TransferFromDevice),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u32)]
pub enum Direction {
    In = 0,
    Out = 1,
    InOut = 2,
}

impl Direction {
    fn from_raw(v: u32) -> Self {
        match v {
            1 => Self::Out,
            2 => Self::InOut,
            _ => Self::In,
        }
    }
}

/// Final (or pending) state of a task as seen through its status word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskStatus {
    Pending,
    Success,
    UnknownKernel,
    DeviceOOM,
    Aborted,
}

impl TaskStatus {
    pub const fn code(self) -> i32 {
        match self {
            TaskStatus::Pending => 0,
            TaskStatus::Success => 1,
            TaskStatus::UnknownKernel => -1,
            TaskStatus::DeviceOOM => -2,
            TaskStatus::Aborted => -3,
        }
    }

    pub const fn from_code(code: i32) -> Self {
        match code {
            0 => TaskStatus::Pending,
            1 => TaskStatus::Success,
            -1 => TaskStatus::UnknownKernel,
            -2 => TaskStatus::DeviceOOM,
            _ => TaskStatus::Aborted,
        }
    }

    pub fn is_final(self) -> bool {
        self != TaskStatus::Pending
    }
}

/// Decoded task descriptor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireDescriptor {
    pub kind: TaskKind,
    pub sequence: u64,
    pub queue: QueueId,
    pub buffer: Option<BufferId>,
    pub staging_offset: u64,
    pub staging_len: u64,
    pub kernel: String,
    pub args: Vec<(BufferId, Direction)>,
    pub scalars: Vec<u8>,
}

impl WireDescriptor {
    pub fn encoded_len(&self) -> u64 {
        D_ARGS + self.args.len() as u64 * ARG_SIZE + self.scalars.len() as u64
    }

    pub fn write(&self, arena: &SharedArena, off: u64) {
        debug_assert!(self.kernel.len() <= MAX_KERNEL_NAME);
        arena.write_u32(off + D_KIND, self.kind as u32);
        arena.atomic_i32(off + D_STATUS).store(0, Ordering::Relaxed);
        arena.write_u64(off + D_SEQ, self.sequence);
        arena.write_u64(off + D_QUEUE, self.queue.raw());
        arena.write_u64(off + D_BUFFER, self.buffer.map_or(u64::MAX, BufferId::raw));
        arena.write_u64(off + D_STAGING_OFF, self.staging_offset);
        arena.write_u64(off + D_STAGING_LEN, self.staging_len);
        arena.write_u32(off + D_NARGS, self.args.len() as u32);
        arena.write_u32(off + D_SCALAR_LEN, self.scalars.len() as u32);
        arena.write_u32(off + D_NAME_LEN, self.kernel.len() as u32);
        let mut name = [0u8; 64];
        name[..self.kernel.len()].copy_from_slice(self.kernel.as_bytes());
        arena.write_bytes(off + D_NAME, &name);
        for (i, (buf, dir)) in self.args.iter().enumerate() {
            let a = off + D_ARGS + i as u64 * ARG_SIZE;
            arena.write_u64(a, buf.raw());
            arena.write_u32(a + 8, *dir as u32);
            arena.write_u32(a + 12, 0);
        }
        let scalars = off + D_ARGS + self.args.len() as u64 * ARG_SIZE;
        arena.write_bytes(scalars, &self.scalars);
    }

    /// Decodes a descriptor; `None` if the kind word is corrupt.
    pub fn read(arena: &SharedArena, off: u64) -> Option<Self> {
        let kind = TaskKind::from_raw(arena.read_u32(off + D_KIND))?;
        let nargs = (arena.read_u32(off + D_NARGS) as usize).min(MAX_TASK_ARGS);
        let scalar_len = (arena.read_u32(off + D_SCALAR_LEN) as usize).min(MAX_SCALAR_BYTES);
        let name_len = (arena.read_u32(off + D_NAME_LEN) as usize).min(MAX_KERNEL_NAME);
        let mut name = vec![0u8; name_len];
        arena.read_bytes(off + D_NAME, &mut name);
        let args = (0..nargs)
            .map(|i| {
                let a = off + D_ARGS + i as u64 * ARG_SIZE;
                (
                    BufferId::from_raw(arena.read_u64(a)),
                    Direction::from_raw(arena.read_u32(a + 8)),
                )
            })
            .collect();
        let mut scalars = vec![0u8; scalar_len];
        arena.read_bytes(off + D_ARGS + nargs as u64 * ARG_SIZE, &mut scalars);
        let buffer = match arena.read_u64(off + D_BUFFER) {
            u64::MAX => None,
            raw => Some(BufferId::from_raw(raw)),
        };
        Some(WireDescriptor {
            kind,
            sequence: arena.read_u64(off + D_SEQ),
            queue: QueueId::from_raw(arena.read_u64(off + D_QUEUE)),
            buffer,
            staging_offset: arena.read_u64(off + D_STAGING_OFF),
            staging_len: arena.read_u64(off + D_STAGING_LEN),
            kernel: String::from_utf8_lossy(&name).into_owned(),
            args,
            scalars,
        })
    }
}

pub fn load_status(arena: &SharedArena, desc_off: u64) -> TaskStatus {
    TaskStatus::from_code(arena.atomic_i32(desc_off + D_STATUS).load(Ordering::Acquire))
}

/// Publishes the final status; everything the task wrote to the arena
/// before this call is visible to a reader that observes the status.
pub fn store_status(arena: &SharedArena, desc_off: u64, status: TaskStatus) {
    arena
        .atomic_i32(desc_off + D_STATUS)
        .store(status.code(), Ordering::Release);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn status_codes() {
        for s in [
            TaskStatus::Pending,
            TaskStatus::Success,
            TaskStatus::UnknownKernel,
            TaskStatus::DeviceOOM,
            TaskStatus::Aborted,
        ] {
            assert_eq!(TaskStatus::from_code(s.code()), s);
        }
        assert_eq!(TaskStatus::Pending.code(), 0);
        assert_eq!(TaskStatus::Success.code(), 1);
        assert!(TaskStatus::DeviceOOM.code() < 0);
    }

    #[test]
    fn ids_pack_index_and_generation() {
        let q = QueueId::new(17, 3);
        assert_eq!((q.index(), q.generation()), (17, 3));
        assert_eq!(QueueId::from_raw(q.raw()), q);
    }

    proptest! {
        #[test]
        fn descriptor_roundtrip(
            kernel in "[a-z_]{0,63}",
            args in proptest::collection::vec((any::<u64>(), 0u32..3), 0..8),
            scalars in proptest::collection::vec(any::<u8>(), 0..256),
            seq in any::<u64>(),
        ) {
            let arena = SharedArena::create_local("wire", 2 << 20).unwrap();
            let d = WireDescriptor {
                kind: TaskKind::Compute,
                sequence: seq,
                queue: QueueId::new(1, 2),
                buffer: None,
                staging_offset: 0,
                staging_len: 0,
                kernel,
                args: args.into_iter().map(|(b, d)| (BufferId::from_raw(b), Direction::from_raw(d))).collect(),
                scalars,
            };
            let a = arena.alloc(d.encoded_len(), 64).unwrap();
            d.write(&arena, a.offset);
            prop_assert_eq!(WireDescriptor::read(&arena, a.offset), Some(d));
            prop_assert_eq!(load_status(&arena, a.offset), TaskStatus::Pending);
        }
    }
}
