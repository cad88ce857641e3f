//! Shared-memory transport.
//!
//! A [`SharedArena`] is one contiguous segment mapped into the client and
//! server address spaces. Everything stored in it refers to other parts of
//! the segment by offset from the segment base, never by pointer, so both
//! sides interpret the bytes identically.
//!
//! ```text
//! 0        4     6     8            16               24                    32
//! ┌────────┬─────┬─────┬────────────┬────────────────┬─────────────────────┐
//! │ magic  │ ver │ rsv │ total_size │ allocator_root │ queue_directory_root│
//! ├────────┴─────┴─────┴────────────┴────────────────┴─────────────────────┤
//! │ 32: next_client_id  36: server_state  40: control_generation           │
//! ├────────────────────────────────────────────────────────────────────────┤
//! │ allocator metadata │ queue directory │ buffer table │ allocator payload │
//! └────────────────────────────────────────────────────────────────────────┘
//! ```
//!
//! All integers are little-endian.

mod alloc;
mod directory;
mod ring;

use std::ffi::CString;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicI32, AtomicU32, AtomicU64, Ordering};

use thiserror::Error;

pub use alloc::{AllocError, AllocatorStats, ArenaAllocation, BLOCK_GRANULE};
pub use directory::{
    BufferEntryState, BufferSlot, DirectoryError, QueueEntryState, QueueSlot, BUFFER_TABLE_CAPACITY,
    QUEUE_DIRECTORY_CAPACITY,
};
pub use ring::{PopError, PushError, RingQueue, TaskRecord, DEFAULT_QUEUE_CAPACITY, SLOT_SIZE};

/// "ARAX" read as a little-endian u32.
pub const ARENA_MAGIC: u32 = 0x4152_4158;
pub const ARENA_VERSION: u16 = 1;

pub const HEADER_SIZE: u64 = 64;

const OFF_MAGIC: u64 = 0;
const OFF_VERSION: u64 = 4;
const OFF_TOTAL_SIZE: u64 = 8;
const OFF_ALLOCATOR_ROOT: u64 = 16;
const OFF_DIRECTORY_ROOT: u64 = 24;
const OFF_NEXT_CLIENT: u64 = 32;
const OFF_SERVER_STATE: u64 = 36;
const OFF_CONTROL_GEN: u64 = 40;

/// Smallest segment that still leaves a usable allocator payload.
pub const MIN_ARENA_SIZE: u64 = 1 << 20;

pub const DEFAULT_ARENA_SIZE: u64 = 256 << 20;

/// Lifecycle word written by the server into the header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ServerState {
    Absent = 0,
    Running = 1,
    ShutdownRequested = 2,
}

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("size too small: {size} bytes (minimum {min})")]
    SizeTooSmall { size: u64, min: u64 },
    #[error("segment name already in use: {0}")]
    NameCollision(String),
    #[error("invalid segment name: {0:?}")]
    InvalidName(String),
    #[error("segment not found: {0}")]
    NotFound(String),
    #[error("mapping failure: {0}")]
    Mapping(#[source] std::io::Error),
    #[error("header magic mismatch: found {found:#010x}")]
    BadMagic { found: u32 },
    #[error("header version mismatch: found {found}, expected {ARENA_VERSION}")]
    BadVersion { found: u16 },
    #[error("segment header is inconsistent: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

enum Backing {
    /// Private anonymous mapping; pages are zeroed on first touch.
    Anon,
    Shm { name: CString, owner: bool },
}

/// A mapped arena segment.
///
/// Created with [`SharedArena::create`] (cross-process, named POSIX shared
/// memory) or [`SharedArena::create_local`] (plain heap allocation for
/// same-process deployments). Both have identical layout and semantics.
pub struct SharedArena {
    base: NonNull<u8>,
    len: u64,
    name: String,
    backing: Backing,
}

// SAFETY: the arena is a raw byte region; every concurrent access goes
// through atomics or is serialized by the allocator lock / SPSC protocol.
unsafe impl Send for SharedArena {}
unsafe impl Sync for SharedArena {}

impl std::fmt::Debug for SharedArena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedArena")
            .field("name", &self.name)
            .field("len", &self.len)
            .finish()
    }
}

fn shm_name(name: &str) -> Result<CString, ArenaError> {
    if name.is_empty() || name.contains('/') || name.len() > 200 {
        return Err(ArenaError::InvalidName(name.to_string()));
    }
    CString::new(format!("/{name}")).map_err(|_| ArenaError::InvalidName(name.to_string()))
}

impl SharedArena {
    /// Creates a named cross-process segment and formats it.
    pub fn create(name: &str, size: u64) -> Result<Self, ArenaError> {
        check_size(size)?;
        let cname = shm_name(name)?;
        // SAFETY: plain libc calls on a valid C string; results are checked.
        unsafe {
            let fd = libc::shm_open(
                cname.as_ptr(),
                libc::O_CREAT | libc::O_EXCL | libc::O_RDWR,
                0o600,
            );
            if fd < 0 {
                let err = std::io::Error::last_os_error();
                if err.raw_os_error() == Some(libc::EEXIST) {
                    return Err(ArenaError::NameCollision(name.to_string()));
                }
                return Err(ArenaError::Mapping(err));
            }
            if libc::ftruncate(fd, size as libc::off_t) != 0 {
                let err = std::io::Error::last_os_error();
                libc::close(fd);
                libc::shm_unlink(cname.as_ptr());
                return Err(ArenaError::Mapping(err));
            }
            let base = map_fd(fd, size);
            libc::close(fd);
            let base = match base {
                Ok(b) => b,
                Err(e) => {
                    libc::shm_unlink(cname.as_ptr());
                    return Err(e);
                }
            };
            let arena = SharedArena {
                base,
                len: size,
                name: name.to_string(),
                backing: Backing::Shm {
                    name: cname,
                    owner: true,
                },
            };
            arena.format()?;
            Ok(arena)
        }
    }

    /// Attaches to a segment created by another process and validates the
    /// header.
    pub fn attach(name: &str) -> Result<Self, ArenaError> {
        let cname = shm_name(name)?;
        // SAFETY: as in `create`.
        unsafe {
            let fd = libc::shm_open(cname.as_ptr(), libc::O_RDWR, 0);
            if fd < 0 {
                let err = std::io::Error::last_os_error();
                if err.raw_os_error() == Some(libc::ENOENT) {
                    return Err(ArenaError::NotFound(name.to_string()));
                }
                return Err(ArenaError::Mapping(err));
            }
            let mut st: libc::stat = std::mem::zeroed();
            if libc::fstat(fd, &mut st) != 0 {
                let err = std::io::Error::last_os_error();
                libc::close(fd);
                return Err(ArenaError::Mapping(err));
            }
            let size = st.st_size as u64;
            if size < HEADER_SIZE {
                libc::close(fd);
                return Err(ArenaError::Corrupt("segment shorter than header"));
            }
            let base = map_fd(fd, size);
            libc::close(fd);
            let arena = SharedArena {
                base: base?,
                len: size,
                name: name.to_string(),
                backing: Backing::Shm {
                    name: cname,
                    owner: false,
                },
            };
            arena.validate()?;
            Ok(arena)
        }
    }

    /// Creates a same-process arena backed by private anonymous memory.
    pub fn create_local(name: &str, size: u64) -> Result<Self, ArenaError> {
        check_size(size)?;
        // SAFETY: anonymous mapping, no fd; the result is checked.
        let ptr = unsafe {
            libc::mmap(
                std::ptr::null_mut(),
                size as usize,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_PRIVATE | libc::MAP_ANONYMOUS,
                -1,
                0,
            )
        };
        if ptr == libc::MAP_FAILED {
            return Err(ArenaError::Mapping(std::io::Error::last_os_error()));
        }
        let arena = SharedArena {
            base: NonNull::new(ptr.cast()).expect("mmap never returns null on success"),
            len: size,
            name: name.to_string(),
            backing: Backing::Anon,
        };
        arena.format()?;
        Ok(arena)
    }

    fn format(&self) -> Result<(), ArenaError> {
        self.write_u32(OFF_MAGIC, ARENA_MAGIC);
        self.write_u16(OFF_VERSION, ARENA_VERSION);
        self.write_u16(6, 0);
        self.write_u64(OFF_TOTAL_SIZE, self.len);
        let allocator_root = HEADER_SIZE;
        let directory_root = allocator_root + alloc::META_SIZE;
        let directory_len = directory::directory_size();
        let payload_start = align_up(directory_root + directory_len, 4096);
        if payload_start + 4 * BLOCK_GRANULE > self.len {
            return Err(ArenaError::SizeTooSmall {
                size: self.len,
                min: MIN_ARENA_SIZE,
            });
        }
        self.write_u64(OFF_ALLOCATOR_ROOT, allocator_root);
        self.write_u64(OFF_DIRECTORY_ROOT, directory_root);
        self.atomic_u32(OFF_NEXT_CLIENT).store(1, Ordering::Relaxed);
        self.atomic_u32(OFF_SERVER_STATE)
            .store(ServerState::Absent as u32, Ordering::Relaxed);
        self.atomic_u64(OFF_CONTROL_GEN).store(0, Ordering::Relaxed);
        alloc::init(self, allocator_root, payload_start, self.len);
        directory::init(self, directory_root);
        std::sync::atomic::fence(Ordering::SeqCst);
        Ok(())
    }

    fn validate(&self) -> Result<(), ArenaError> {
        let magic = self.read_u32(OFF_MAGIC);
        if magic != ARENA_MAGIC {
            return Err(ArenaError::BadMagic { found: magic });
        }
        let version = self.read_u16(OFF_VERSION);
        if version != ARENA_VERSION {
            return Err(ArenaError::BadVersion { found: version });
        }
        if self.read_u64(OFF_TOTAL_SIZE) != self.len {
            return Err(ArenaError::Corrupt("total_size does not match mapping"));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total_size(&self) -> u64 {
        self.len
    }

    pub fn is_cross_process(&self) -> bool {
        matches!(self.backing, Backing::Shm { .. })
    }

    pub fn allocator_root(&self) -> u64 {
        self.read_u64(OFF_ALLOCATOR_ROOT)
    }

    pub fn queue_directory_root(&self) -> u64 {
        self.read_u64(OFF_DIRECTORY_ROOT)
    }

    /// Raw copy of the 32-byte fixed header.
    pub fn header_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        self.read_bytes(0, &mut out);
        out
    }

    pub fn next_client_id(&self) -> u32 {
        self.atomic_u32(OFF_NEXT_CLIENT).fetch_add(1, Ordering::Relaxed)
    }

    pub fn server_state(&self) -> ServerState {
        match self.atomic_u32(OFF_SERVER_STATE).load(Ordering::Acquire) {
            1 => ServerState::Running,
            2 => ServerState::ShutdownRequested,
            _ => ServerState::Absent,
        }
    }

    pub fn set_server_state(&self, state: ServerState) {
        self.atomic_u32(OFF_SERVER_STATE)
            .store(state as u32, Ordering::Release);
    }

    /// Counter bumped whenever a queue or buffer entry changes state, so the
    /// server only rescans the directory when something happened.
    pub fn control_generation(&self) -> u64 {
        self.atomic_u64(OFF_CONTROL_GEN).load(Ordering::Acquire)
    }

    pub(crate) fn bump_control_generation(&self) {
        self.atomic_u64(OFF_CONTROL_GEN).fetch_add(1, Ordering::AcqRel);
    }

    // ---- allocator ----

    pub fn alloc(&self, size: u64, align: u64) -> Result<ArenaAllocation, AllocError> {
        alloc::alloc(self, size, align)
    }

    pub fn free(&self, allocation: ArenaAllocation) -> Result<(), AllocError> {
        alloc::free(self, allocation.offset)
    }

    /// Frees by payload offset; used where only the offset travelled through
    /// shared memory.
    pub fn free_offset(&self, offset: u64) -> Result<(), AllocError> {
        alloc::free(self, offset)
    }

    pub fn allocator_stats(&self) -> AllocatorStats {
        alloc::stats(self)
    }

    // ---- raw access ----

    #[inline]
    fn check(&self, off: u64, len: u64) {
        assert!(
            off.checked_add(len).is_some_and(|end| end <= self.len),
            "arena access out of bounds: off={off} len={len} size={}",
            self.len
        );
    }

    #[inline]
    fn ptr(&self, off: u64) -> *mut u8 {
        // SAFETY: callers check bounds first.
        unsafe { self.base.as_ptr().add(off as usize) }
    }

    #[inline]
    pub(crate) fn atomic_u32(&self, off: u64) -> &AtomicU32 {
        self.check(off, 4);
        debug_assert_eq!(off % 4, 0);
        // SAFETY: in bounds, 4-aligned (the base is page aligned).
        unsafe { &*(self.ptr(off) as *const AtomicU32) }
    }

    #[inline]
    pub(crate) fn atomic_i32(&self, off: u64) -> &AtomicI32 {
        self.check(off, 4);
        debug_assert_eq!(off % 4, 0);
        // SAFETY: as above.
        unsafe { &*(self.ptr(off) as *const AtomicI32) }
    }

    #[inline]
    pub(crate) fn atomic_u64(&self, off: u64) -> &AtomicU64 {
        self.check(off, 8);
        debug_assert_eq!(off % 8, 0);
        // SAFETY: as above, 8-aligned.
        unsafe { &*(self.ptr(off) as *const AtomicU64) }
    }

    #[inline]
    pub fn read_u16(&self, off: u64) -> u16 {
        let mut b = [0u8; 2];
        self.read_bytes(off, &mut b);
        u16::from_le_bytes(b)
    }

    #[inline]
    pub fn read_u32(&self, off: u64) -> u32 {
        let mut b = [0u8; 4];
        self.read_bytes(off, &mut b);
        u32::from_le_bytes(b)
    }

    #[inline]
    pub fn read_u64(&self, off: u64) -> u64 {
        let mut b = [0u8; 8];
        self.read_bytes(off, &mut b);
        u64::from_le_bytes(b)
    }

    #[inline]
    pub(crate) fn write_u16(&self, off: u64, v: u16) {
        self.write_bytes(off, &v.to_le_bytes());
    }

    #[inline]
    pub(crate) fn write_u32(&self, off: u64, v: u32) {
        self.write_bytes(off, &v.to_le_bytes());
    }

    #[inline]
    pub(crate) fn write_u64(&self, off: u64, v: u64) {
        self.write_bytes(off, &v.to_le_bytes());
    }

    #[inline]
    pub fn read_bytes(&self, off: u64, dst: &mut [u8]) {
        self.check(off, dst.len() as u64);
        // SAFETY: bounds checked; the region is plain bytes.
        unsafe { std::ptr::copy_nonoverlapping(self.ptr(off), dst.as_mut_ptr(), dst.len()) }
    }

    #[inline]
    pub(crate) fn write_bytes(&self, off: u64, src: &[u8]) {
        self.check(off, src.len() as u64);
        // SAFETY: bounds checked.
        unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), self.ptr(off), src.len()) }
    }

    pub fn fill(&self, off: u64, len: u64, value: u8) {
        self.check(off, len);
        // SAFETY: bounds checked.
        unsafe { std::ptr::write_bytes(self.ptr(off), value, len as usize) }
    }
}

impl Drop for SharedArena {
    fn drop(&mut self) {
        match &self.backing {
            Backing::Anon => {
                // SAFETY: mapping created in `create_local` with this length.
                unsafe {
                    libc::munmap(self.base.as_ptr().cast(), self.len as usize);
                }
            }
            Backing::Shm { name, owner } => {
                // SAFETY: mapping created by `map_fd` with this length.
                unsafe {
                    libc::munmap(self.base.as_ptr().cast(), self.len as usize);
                    if *owner {
                        libc::shm_unlink(name.as_ptr());
                    }
                }
            }
        }
    }
}

fn check_size(size: u64) -> Result<(), ArenaError> {
    if size < MIN_ARENA_SIZE {
        return Err(ArenaError::SizeTooSmall {
            size,
            min: MIN_ARENA_SIZE,
        });
    }
    Ok(())
}

unsafe fn map_fd(fd: libc::c_int, size: u64) -> Result<NonNull<u8>, ArenaError> {
    let ptr = libc::mmap(
        std::ptr::null_mut(),
        size as usize,
        libc::PROT_READ | libc::PROT_WRITE,
        libc::MAP_SHARED,
        fd,
        0,
    );
    if ptr == libc::MAP_FAILED {
        return Err(ArenaError::Mapping(std::io::Error::last_os_error()));
    }
    Ok(NonNull::new_unchecked(ptr.cast()))
}

#[inline]
pub(crate) const fn align_up(v: u64, align: u64) -> u64 {
    (v + align - 1) & !(align - 1)
}

/// Cross-process spin lock living in the segment.
pub(crate) struct ArenaLock<'a> {
    word: &'a AtomicU32,
}

impl<'a> ArenaLock<'a> {
    pub(crate) fn acquire(word: &'a AtomicU32) -> Self {
        let mut spins = 0u32;
        loop {
            if word
                .compare_exchange_weak(0, 1, Ordering::Acquire, Ordering::Relaxed)
                .is_ok()
            {
                return ArenaLock { word };
            }
            spins += 1;
            if spins < 128 {
                std::hint::spin_loop();
            } else {
                std::thread::yield_now();
            }
        }
    }
}

impl Drop for ArenaLock<'_> {
    fn drop(&mut self) {
        self.word.store(0, Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_local_reports_capacity() {
        let arena = SharedArena::create_local("t", 64 << 20).unwrap();
        let stats = arena.allocator_stats();
        assert!(stats.capacity >= (64 << 20) - 4 * 1024 * 1024);
        assert_eq!(stats.used, 0);
    }

    #[test]
    fn zero_size_is_too_small() {
        let err = SharedArena::create_local("t", 0).unwrap_err();
        assert!(err.to_string().contains("size too small"), "{err}");
        assert!(matches!(
            SharedArena::create("zero-size", 0),
            Err(ArenaError::SizeTooSmall { .. })
        ));
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let arena = SharedArena::create_local("t", 8 << 20).unwrap();
        let h = arena.header_bytes();
        assert_eq!(&h[0..4], b"XARA");
        assert_eq!(u32::from_le_bytes(h[0..4].try_into().unwrap()), 0x4152_4158);
        assert_eq!(u16::from_le_bytes([h[4], h[5]]), ARENA_VERSION);
        assert_eq!(&h[6..8], &[0, 0]);
        assert_eq!(u64::from_le_bytes(h[8..16].try_into().unwrap()), 8 << 20);
        assert_eq!(
            u64::from_le_bytes(h[16..24].try_into().unwrap()),
            arena.allocator_root()
        );
        assert_eq!(
            u64::from_le_bytes(h[24..32].try_into().unwrap()),
            arena.queue_directory_root()
        );
    }

    #[test]
    fn named_segment_collision_and_attach() {
        let name = format!("arax-unit-{}", std::process::id());
        let a = SharedArena::create(&name, 4 << 20).unwrap();
        assert!(matches!(
            SharedArena::create(&name, 4 << 20),
            Err(ArenaError::NameCollision(_))
        ));
        let b = SharedArena::attach(&name).unwrap();
        assert_eq!(a.header_bytes(), b.header_bytes());
        let alloc = a.alloc(128, 8).unwrap();
        a.write_bytes(alloc.offset, &[7u8; 128]);
        let mut back = [0u8; 128];
        b.read_bytes(alloc.offset, &mut back);
        assert_eq!(back, [7u8; 128]);
        drop(b);
        drop(a);
        assert!(matches!(
            SharedArena::attach(&name),
            Err(ArenaError::NotFound(_))
        ));
    }

    #[test]
    fn attach_rejects_bad_magic() {
        let name = format!("arax-unit-magic-{}", std::process::id());
        let a = SharedArena::create(&name, 4 << 20).unwrap();
        a.write_u32(0, 0xdead_beef);
        assert!(matches!(
            SharedArena::attach(&name),
            Err(ArenaError::BadMagic { found: 0xdead_beef })
        ));
        a.write_u32(0, ARENA_MAGIC);
        a.write_u16(4, 99);
        assert!(matches!(
            SharedArena::attach(&name),
            Err(ArenaError::BadVersion { found: 99 })
        ));
    }
}
