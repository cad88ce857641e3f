//! Segregated free-list allocator over the arena payload region.
//!
//! Blocks carry a 32-byte boundary tag:
//!
//! ```text
//! +0  size|flags  u64   (size is a multiple of 32, bit 0 = in use)
//! +8  prev_size   u64   (size of the physically preceding block, 0 for the first)
//! +16 tag         u32   (INUSE / FREE / ABSORBED)
//! +20 reserved
//! +32 payload     (free blocks keep next/prev free-list offsets here)
//! ```
//!
//! Free blocks are binned by `floor(log2(size))`; allocation walks bins from
//! the request's class upwards and takes the first block that fits (first
//! fit within a class). Freed blocks coalesce with free neighbours
//! immediately, so two adjacent free blocks never exist. Fragmentation is
//! therefore bounded by alignment padding plus the spread inside one size
//! class: a request may skip a slightly-too-small block in its own class
//! and split a larger one instead.

use super::{align_up, ArenaLock, SharedArena};
use thiserror::Error;

pub const BLOCK_GRANULE: u64 = 32;
const HEADER: u64 = 32;
const MIN_BLOCK: u64 = 64;
const NUM_BINS: u64 = 64;

const TAG_INUSE: u32 = 0xA110_C8ED;
const TAG_FREE: u32 = 0xF4EE_B10C;
const TAG_ABSORBED: u32 = 0xAB50_4BED;

// metadata layout (relative to allocator_root)
const M_LOCK: u64 = 0;
const M_PAYLOAD_START: u64 = 8;
const M_PAYLOAD_END: u64 = 16;
const M_USED: u64 = 24;
const M_LIVE: u64 = 32;
const M_BINS: u64 = 64;
pub(crate) const META_SIZE: u64 = M_BINS + NUM_BINS * 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("out of arena memory: requested {requested} bytes")]
    OutOfMemory { requested: u64 },
    #[error("allocation size must be > 0")]
    ZeroSize,
    #[error("alignment {0} is not a power of two")]
    BadAlignment(u64),
    #[error("double free at offset {0}")]
    DoubleFree(u64),
    #[error("foreign offset {0}")]
    ForeignOffset(u64),
}

/// A live region handed out by the allocator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ArenaAllocation {
    pub offset: u64,
    pub size: u64,
    pub alignment: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AllocatorStats {
    pub payload_start: u64,
    pub payload_end: u64,
    /// Bytes managed by the allocator (payload region minus the end sentinel).
    pub capacity: u64,
    /// Bytes held by live blocks, boundary tags included.
    pub used: u64,
    pub live_allocations: u64,
}

struct Heap<'a> {
    arena: &'a SharedArena,
    root: u64,
}

impl<'a> Heap<'a> {
    fn new(arena: &'a SharedArena) -> Self {
        Heap {
            arena,
            root: arena.allocator_root(),
        }
    }

    fn meta(&self, field: u64) -> u64 {
        self.arena.read_u64(self.root + field)
    }

    fn set_meta(&self, field: u64, v: u64) {
        self.arena.write_u64(self.root + field, v)
    }

    fn bin_head(&self, bin: u64) -> u64 {
        self.meta(M_BINS + bin * 8)
    }

    fn set_bin_head(&self, bin: u64, v: u64) {
        self.set_meta(M_BINS + bin * 8, v)
    }

    fn size(&self, b: u64) -> u64 {
        self.arena.read_u64(b) & !(BLOCK_GRANULE - 1)
    }

    fn prev_size(&self, b: u64) -> u64 {
        self.arena.read_u64(b + 8)
    }

    fn tag(&self, b: u64) -> u32 {
        self.arena.read_u32(b + 16)
    }

    fn set_header(&self, b: u64, size: u64, in_use: bool) {
        self.arena.write_u64(b, size | in_use as u64);
        self.arena
            .write_u32(b + 16, if in_use { TAG_INUSE } else { TAG_FREE });
    }

    fn set_prev_size(&self, b: u64, prev: u64) {
        self.arena.write_u64(b + 8, prev)
    }

    fn next_free(&self, b: u64) -> u64 {
        self.arena.read_u64(b + HEADER)
    }

    fn prev_free(&self, b: u64) -> u64 {
        self.arena.read_u64(b + HEADER + 8)
    }

    fn set_links(&self, b: u64, next: u64, prev: u64) {
        self.arena.write_u64(b + HEADER, next);
        self.arena.write_u64(b + HEADER + 8, prev);
    }

    fn insert_free(&self, b: u64, size: u64) {
        self.set_header(b, size, false);
        let bin = bin_of(size);
        let head = self.bin_head(bin);
        self.set_links(b, head, 0);
        if head != 0 {
            self.arena.write_u64(head + HEADER + 8, b);
        }
        self.set_bin_head(bin, b);
        self.fix_next_prev_size(b, size);
    }

    fn remove_free(&self, b: u64) {
        let bin = bin_of(self.size(b));
        let next = self.next_free(b);
        let prev = self.prev_free(b);
        if prev == 0 {
            self.set_bin_head(bin, next);
        } else {
            self.arena.write_u64(prev + HEADER, next);
        }
        if next != 0 {
            self.arena.write_u64(next + HEADER + 8, prev);
        }
    }

    fn fix_next_prev_size(&self, b: u64, size: u64) {
        let next = b + size;
        if next < self.meta(M_PAYLOAD_END) {
            self.set_prev_size(next, size);
        }
    }
}

fn bin_of(size: u64) -> u64 {
    63 - size.leading_zeros() as u64
}

pub(crate) fn init(arena: &SharedArena, root: u64, payload_start: u64, end: u64) {
    arena.fill(root, META_SIZE, 0);
    let heap = Heap { arena, root };
    let start = align_up(payload_start, BLOCK_GRANULE);
    let end = end & !(BLOCK_GRANULE - 1);
    heap.set_meta(M_PAYLOAD_START, start);
    heap.set_meta(M_PAYLOAD_END, end);
    // permanent in-use sentinel closing the heap
    let sentinel = end - HEADER;
    let first_size = sentinel - start;
    heap.set_header(sentinel, HEADER, true);
    heap.set_prev_size(start, 0);
    heap.insert_free(start, first_size);
    heap.set_meta(M_USED, 0);
    heap.set_meta(M_LIVE, 0);
}

pub(crate) fn alloc(arena: &SharedArena, size: u64, align: u64) -> Result<ArenaAllocation, AllocError> {
    if size == 0 {
        return Err(AllocError::ZeroSize);
    }
    if align == 0 || !align.is_power_of_two() {
        return Err(AllocError::BadAlignment(align));
    }
    let heap = Heap::new(arena);
    let _guard = ArenaLock::acquire(arena.atomic_u32(heap.root + M_LOCK));
    let eff_align = align.max(BLOCK_GRANULE);
    let need = align_up(size, BLOCK_GRANULE)
        .checked_add(HEADER)
        .ok_or(AllocError::OutOfMemory { requested: size })?
        .max(MIN_BLOCK);

    let mut bin = bin_of(need);
    while bin < NUM_BINS {
        let mut b = heap.bin_head(bin);
        while b != 0 {
            let bsize = heap.size(b);
            if let Some(payload) = placement(b, bsize, need, eff_align) {
                heap.remove_free(b);
                let block = payload - HEADER;
                let mut block_size = bsize;
                let lead = block - b;
                if lead > 0 {
                    heap.insert_free(b, lead);
                    block_size -= lead;
                    heap.set_prev_size(block, lead);
                }
                let rest = block_size - need;
                if rest >= MIN_BLOCK {
                    block_size = need;
                    let tail = block + need;
                    heap.set_prev_size(tail, need);
                    heap.insert_free(tail, rest);
                }
                heap.set_header(block, block_size, true);
                heap.fix_next_prev_size(block, block_size);
                heap.set_meta(M_USED, heap.meta(M_USED) + block_size);
                heap.set_meta(M_LIVE, heap.meta(M_LIVE) + 1);
                return Ok(ArenaAllocation {
                    offset: payload,
                    size,
                    alignment: align,
                });
            }
            b = heap.next_free(b);
        }
        bin += 1;
    }
    Err(AllocError::OutOfMemory { requested: size })
}

/// Payload offset at which a request of `need` bytes (header included) fits
/// inside free block `b`, honouring alignment and leaving either no lead
/// fragment or one large enough to stand as a free block.
fn placement(b: u64, bsize: u64, need: u64, align: u64) -> Option<u64> {
    let mut payload = align_up(b + HEADER, align);
    let mut lead = payload - HEADER - b;
    while lead != 0 && lead < MIN_BLOCK {
        payload += align;
        lead = payload - HEADER - b;
    }
    (payload - HEADER + need <= b + bsize).then_some(payload)
}

pub(crate) fn free(arena: &SharedArena, offset: u64) -> Result<(), AllocError> {
    let heap = Heap::new(arena);
    let _guard = ArenaLock::acquire(arena.atomic_u32(heap.root + M_LOCK));
    let start = heap.meta(M_PAYLOAD_START);
    let end = heap.meta(M_PAYLOAD_END);
    if offset < start + HEADER || offset >= end || !offset.is_multiple_of(BLOCK_GRANULE) {
        return Err(AllocError::ForeignOffset(offset));
    }
    let mut b = offset - HEADER;
    match heap.tag(b) {
        TAG_INUSE => {}
        TAG_FREE | TAG_ABSORBED => return Err(AllocError::DoubleFree(offset)),
        _ => return Err(AllocError::ForeignOffset(offset)),
    }
    let mut size = heap.size(b);
    if size < MIN_BLOCK || b + size > end - HEADER {
        return Err(AllocError::ForeignOffset(offset));
    }
    heap.set_meta(M_USED, heap.meta(M_USED) - size);
    heap.set_meta(M_LIVE, heap.meta(M_LIVE) - 1);

    let next = b + size;
    if heap.tag(next) == TAG_FREE {
        heap.remove_free(next);
        size += heap.size(next);
        arena.write_u32(next + 16, TAG_ABSORBED);
    }
    if b > start {
        let prev = b - heap.prev_size(b);
        if heap.tag(prev) == TAG_FREE {
            heap.remove_free(prev);
            size += heap.size(prev);
            arena.write_u32(b + 16, TAG_ABSORBED);
            b = prev;
        }
    }
    heap.insert_free(b, size);
    Ok(())
}

pub(crate) fn stats(arena: &SharedArena) -> AllocatorStats {
    let heap = Heap::new(arena);
    let _guard = ArenaLock::acquire(arena.atomic_u32(heap.root + M_LOCK));
    let start = heap.meta(M_PAYLOAD_START);
    let end = heap.meta(M_PAYLOAD_END);
    AllocatorStats {
        payload_start: start,
        payload_end: end,
        capacity: end - HEADER - start,
        used: heap.meta(M_USED),
        live_allocations: heap.meta(M_LIVE),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn arena(size: u64) -> SharedArena {
        SharedArena::create_local("alloc-test", size).unwrap()
    }

    #[test]
    fn alignment_contract() {
        let a = arena(4 << 20);
        let x = a.alloc(64, 8).unwrap();
        assert_eq!(x.offset % 8, 0);
        for align in [1u64, 2, 64, 256, 4096] {
            let y = a.alloc(100, align).unwrap();
            assert_eq!(y.offset % align, 0, "align {align}");
        }
    }

    #[test]
    fn sequential_allocations_are_disjoint() {
        let a = arena(4 << 20);
        let x = a.alloc(1024, 8).unwrap();
        let y = a.alloc(1024, 8).unwrap();
        assert!(x.offset + x.size <= y.offset || y.offset + y.size <= x.offset);
    }

    #[test]
    fn free_reclaims_and_detects_double_free() {
        let a = arena(2 << 20);
        let cap = a.allocator_stats().capacity;
        let big = a.alloc(cap - 64, 8).unwrap();
        assert!(matches!(a.alloc(1024, 8), Err(AllocError::OutOfMemory { .. })));
        a.free(big).unwrap();
        let again = a.alloc(cap - 64, 8).unwrap();
        a.free(again).unwrap();
        assert_eq!(a.free(again), Err(AllocError::DoubleFree(again.offset)));
    }

    #[test]
    fn double_free_after_coalescing_into_predecessor() {
        let a = arena(2 << 20);
        let x = a.alloc(100, 8).unwrap();
        let y = a.alloc(100, 8).unwrap();
        let _z = a.alloc(100, 8).unwrap();
        a.free(x).unwrap();
        a.free(y).unwrap();
        assert_eq!(a.free(y), Err(AllocError::DoubleFree(y.offset)));
    }

    #[test]
    fn foreign_offsets_rejected() {
        let a = arena(2 << 20);
        let x = a.alloc(256, 8).unwrap();
        assert!(matches!(a.free_offset(3), Err(AllocError::ForeignOffset(3))));
        assert!(matches!(
            a.free_offset(x.offset + 64),
            Err(AllocError::ForeignOffset(_))
        ));
        assert!(matches!(
            a.free_offset(a.total_size() + 4096),
            Err(AllocError::ForeignOffset(_))
        ));
    }

    #[test]
    fn bad_requests() {
        let a = arena(2 << 20);
        assert_eq!(a.alloc(0, 8), Err(AllocError::ZeroSize));
        assert_eq!(a.alloc(8, 3), Err(AllocError::BadAlignment(3)));
    }

    #[test]
    fn utilization_returns_to_baseline() {
        let a = arena(8 << 20);
        let base = a.allocator_stats();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let live: Vec<_> = (0..500)
            .map(|_| a.alloc(rng.gen_range(1..5000), 1 << rng.gen_range(0..8)).unwrap())
            .collect();
        assert!(a.allocator_stats().used > base.used);
        for x in live.into_iter().rev() {
            a.free(x).unwrap();
        }
        assert_eq!(a.allocator_stats(), base);
    }

    /// Random alloc/free trace against a shadow interval set.
    pub(crate) fn shadow_trace(a: &SharedArena, ops: usize, seed: u64) {
        let stats = a.allocator_stats();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut live: BTreeMap<u64, ArenaAllocation> = BTreeMap::new();
        let mut order: Vec<u64> = Vec::new();
        for _ in 0..ops {
            let do_alloc = live.is_empty() || rng.gen_bool(0.55);
            if do_alloc {
                let size = if rng.gen_bool(0.05) {
                    rng.gen_range(1..256 * 1024)
                } else {
                    rng.gen_range(1..2048)
                };
                let align = 1u64 << rng.gen_range(0..10);
                match a.alloc(size, align) {
                    Ok(x) => {
                        assert_eq!(x.offset % align, 0);
                        assert!(x.offset >= stats.payload_start);
                        assert!(x.offset + x.size <= stats.payload_end);
                        if let Some((_, prev)) = live.range(..x.offset).next_back() {
                            assert!(prev.offset + prev.size <= x.offset, "overlap {prev:?} {x:?}");
                        }
                        if let Some((_, next)) = live.range(x.offset..).next() {
                            assert!(x.offset + x.size <= next.offset, "overlap {x:?} {next:?}");
                        }
                        live.insert(x.offset, x);
                        order.push(x.offset);
                    }
                    Err(AllocError::OutOfMemory { .. }) => {
                        assert!(!live.is_empty(), "OOM on an empty heap for {size} bytes");
                    }
                    Err(e) => panic!("unexpected {e}"),
                }
            } else {
                let idx = rng.gen_range(0..order.len());
                let off = order.swap_remove(idx);
                let x = live.remove(&off).unwrap();
                a.free(x).unwrap();
            }
            let total: u64 = live.values().map(|v| v.size).sum();
            assert!(total <= stats.capacity);
        }
        for x in live.into_values() {
            a.free(x).unwrap();
        }
        assert_eq!(a.allocator_stats().used, 0);
    }

    #[test]
    fn shadow_model_10k_ops() {
        let a = arena(16 << 20);
        shadow_trace(&a, 10_000, 42);
    }

    #[test]
    fn exhaustion_under_small_arena() {
        let a = arena(1 << 20);
        shadow_trace(&a, 5_000, 7);
    }
}
