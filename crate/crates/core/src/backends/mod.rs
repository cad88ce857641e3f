//! Virtual accelerators.
//!
//! A [`Device`] implements the six data-movement primitives (alloc, free,
//! sync_to, sync_from, memset, devcpy) over private byte storage, plus
//! stream launches timed by an occupancy [`Timeline`]. Kernels always run
//! as CPU functions; only the reported timing differs between devices.

mod kernels;
mod timeline;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::BufferId;

pub use kernels::{
    standard_kernel, standard_library, CostFn, DispatchError, DispatchTable, KernelArgs,
    KernelError, KernelFn, KernelImpl, ScalarReader,
};
pub use timeline::{Booking, Timeline};

pub type DeviceId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceType {
    #[serde(rename = "cpu", alias = "CPU")]
    Cpu,
    #[serde(rename = "sim_gpu", alias = "SIM_GPU")]
    SimGpu,
    #[serde(rename = "sim_fpga", alias = "SIM_FPGA")]
    SimFpga,
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceType::Cpu => "CPU",
            DeviceType::SimGpu => "SIM_GPU",
            DeviceType::SimFpga => "SIM_FPGA",
        })
    }
}

impl FromStr for DeviceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cpu" => Ok(DeviceType::Cpu),
            "sim_gpu" | "gpu" => Ok(DeviceType::SimGpu),
            "sim_fpga" | "fpga" => Ok(DeviceType::SimFpga),
            _ => Err(format!("unknown device type {s:?}")),
        }
    }
}

/// Static description of one virtual accelerator.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceDescriptor {
    pub id: DeviceId,
    pub name: String,
    pub device_type: DeviceType,
    /// 0 runs at native CPU speed; 1 takes twice as long.
    pub speed_factor: f64,
    pub streams: usize,
    pub mem_capacity: u64,
    /// `None` accepts every registered kernel.
    pub kernel_set: Option<Vec<String>>,
    pub reload_penalty_ns: u64,
}

impl DeviceDescriptor {
    pub fn new(id: DeviceId, name: &str, device_type: DeviceType) -> Self {
        DeviceDescriptor {
            id,
            name: name.to_string(),
            device_type,
            speed_factor: 0.0,
            streams: 4,
            mem_capacity: 256 << 20,
            kernel_set: None,
            reload_penalty_ns: 0,
        }
    }

    pub fn supports(&self, kernel: &str) -> bool {
        self.kernel_set
            .as_ref()
            .is_none_or(|set| set.iter().any(|k| k == kernel))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.streams == 0 {
            return Err(format!("device {}: streams must be >= 1", self.name));
        }
        if self.mem_capacity == 0 {
            return Err(format!("device {}: mem_capacity must be > 0", self.name));
        }
        if !(self.speed_factor >= 0.0 && self.speed_factor.is_finite()) {
            return Err(format!("device {}: speed_factor must be >= 0", self.name));
        }
        Ok(())
    }
}

/// How durations are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    /// Measured CPU time, completion against the wall clock.
    Real,
    /// Cost-model time, completion against a simulated clock.
    #[default]
    Virtual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingModel {
    pub clock: ClockKind,
    /// Host↔device bandwidth used for modeled transfers.
    pub bytes_per_us: u64,
    pub transfer_setup_ns: u64,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            clock: ClockKind::Virtual,
            bytes_per_us: 8_000,
            transfer_setup_ns: 1_000,
        }
    }
}

impl TimingModel {
    pub fn transfer_ns(&self, bytes: u64) -> u64 {
        self.transfer_setup_ns + bytes * 1_000 / self.bytes_per_us.max(1)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("device out of memory: requested {requested} B, {available} B available")]
    OutOfMemory { requested: u64, available: u64 },
    #[error("double free of device allocation {0}")]
    DoubleFree(u64),
    #[error("out-of-bounds access: {offset}+{len} > {size}")]
    OutOfBounds { offset: u64, len: u64, size: u64 },
    #[error("copy between devices {0} and {1} is not supported")]
    CrossDevice(DeviceId, DeviceId),
    #[error("kernel {0:?} is not supported by this device")]
    KernelUnsupported(String),
    #[error("stream {0} out of range")]
    StreamOutOfRange(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Reference to memory on one device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DevicePtr {
    pub device: DeviceId,
    pub handle: u64,
}

struct DeviceAlloc {
    data: Vec<u8>,
    tag: Option<BufferId>,
}

/// Reported when a launch or transfer finishes on the device timeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionToken {
    pub device: DeviceId,
    pub start: u64,
    pub end: u64,
}

pub struct Device {
    desc: DeviceDescriptor,
    timing: TimingModel,
    allocs: BTreeMap<u64, DeviceAlloc>,
    next_handle: u64,
    used: u64,
    timeline: Timeline,
    loaded_kernel: Option<String>,
    busy_ns: f64,
    launches: u64,
    last_launch: u64,
    reload_ns_total: u64,
}

impl fmt::Debug for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Device")
            .field("desc", &self.desc)
            .field("used", &self.used)
            .field("allocations", &self.allocs.len())
            .finish()
    }
}

impl Device {
    pub fn new(desc: DeviceDescriptor, timing: TimingModel) -> Self {
        let loaded_kernel = match desc.device_type {
            DeviceType::SimFpga => desc
                .kernel_set
                .as_ref()
                .and_then(|s| s.first().cloned()),
            _ => None,
        };
        Device {
            timeline: Timeline::new(desc.streams.max(1)),
            desc,
            timing,
            allocs: BTreeMap::new(),
            next_handle: 1,
            used: 0,
            loaded_kernel,
            busy_ns: 0.0,
            launches: 0,
            last_launch: 0,
            reload_ns_total: 0,
        }
    }

    pub fn descriptor(&self) -> &DeviceDescriptor {
        &self.desc
    }

    pub fn id(&self) -> DeviceId {
        self.desc.id
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn available(&self) -> u64 {
        self.desc.mem_capacity - self.used
    }

    pub fn timing(&self) -> &TimingModel {
        &self.timing
    }

    fn ptr(&self, handle: u64) -> DevicePtr {
        DevicePtr {
            device: self.desc.id,
            handle,
        }
    }

    fn entry(&self, p: DevicePtr) -> Result<&DeviceAlloc, DeviceError> {
        if p.device != self.desc.id {
            return Err(DeviceError::CrossDevice(p.device, self.desc.id));
        }
        self.allocs.get(&p.handle).ok_or(DeviceError::DoubleFree(p.handle))
    }

    fn entry_mut(&mut self, p: DevicePtr) -> Result<&mut DeviceAlloc, DeviceError> {
        if p.device != self.desc.id {
            return Err(DeviceError::CrossDevice(p.device, self.desc.id));
        }
        self.allocs
            .get_mut(&p.handle)
            .ok_or(DeviceError::DoubleFree(p.handle))
    }

    /// Reserves zero-filled device memory.
    pub fn alloc(&mut self, size: u64, tag: Option<BufferId>) -> Result<DevicePtr, DeviceError> {
        if size > self.available() {
            return Err(DeviceError::OutOfMemory {
                requested: size,
                available: self.available(),
            });
        }
        let handle = self.next_handle;
        self.next_handle += 1;
        self.allocs.insert(
            handle,
            DeviceAlloc {
                data: vec![0; size as usize],
                tag,
            },
        );
        self.used += size;
        Ok(self.ptr(handle))
    }

    pub fn free(&mut self, p: DevicePtr) -> Result<(), DeviceError> {
        if p.device != self.desc.id {
            return Err(DeviceError::CrossDevice(p.device, self.desc.id));
        }
        let a = self
            .allocs
            .remove(&p.handle)
            .ok_or(DeviceError::DoubleFree(p.handle))?;
        self.used -= a.data.len() as u64;
        Ok(())
    }

    pub fn size_of(&self, p: DevicePtr) -> Result<u64, DeviceError> {
        Ok(self.entry(p)?.data.len() as u64)
    }

    fn bounds(size: usize, offset: u64, len: usize) -> Result<std::ops::Range<usize>, DeviceError> {
        let end = offset.checked_add(len as u64);
        match end {
            Some(e) if e <= size as u64 => Ok(offset as usize..e as usize),
            _ => Err(DeviceError::OutOfBounds {
                offset,
                len: len as u64,
                size: size as u64,
            }),
        }
    }

    pub fn sync_to(&mut self, p: DevicePtr, offset: u64, src: &[u8]) -> Result<(), DeviceError> {
        let a = self.entry_mut(p)?;
        let r = Self::bounds(a.data.len(), offset, src.len())?;
        a.data[r].copy_from_slice(src);
        Ok(())
    }

    pub fn sync_from(&self, p: DevicePtr, offset: u64, dst: &mut [u8]) -> Result<(), DeviceError> {
        let a = self.entry(p)?;
        let r = Self::bounds(a.data.len(), offset, dst.len())?;
        dst.copy_from_slice(&a.data[r]);
        Ok(())
    }

    /// Device bytes `offset..offset + len`, for copies straight from or
    /// into server memory.
    pub fn bytes(&self, p: DevicePtr, offset: u64, len: u64) -> Result<&[u8], DeviceError> {
        let a = self.entry(p)?;
        let r = Self::bounds(a.data.len(), offset, len as usize)?;
        Ok(&a.data[r])
    }

    pub fn bytes_mut(&mut self, p: DevicePtr, offset: u64, len: u64) -> Result<&mut [u8], DeviceError> {
        let a = self.entry_mut(p)?;
        let r = Self::bounds(a.data.len(), offset, len as usize)?;
        Ok(&mut a.data[r])
    }

    pub fn memset(&mut self, p: DevicePtr, offset: u64, len: u64, value: u8) -> Result<(), DeviceError> {
        let a = self.entry_mut(p)?;
        let r = Self::bounds(a.data.len(), offset, len as usize)?;
        a.data[r].fill(value);
        Ok(())
    }

    /// Copy within this device.
    pub fn devcpy(
        &mut self,
        dst: DevicePtr,
        dst_off: u64,
        src: DevicePtr,
        src_off: u64,
        len: u64,
    ) -> Result<(), DeviceError> {
        if src.device != dst.device {
            return Err(DeviceError::CrossDevice(src.device, dst.device));
        }
        let s = self.entry(src)?;
        let sr = Self::bounds(s.data.len(), src_off, len as usize)?;
        let bytes = s.data[sr].to_vec();
        let d = self.entry_mut(dst)?;
        let dr = Self::bounds(d.data.len(), dst_off, len as usize)?;
        d.data[dr].copy_from_slice(&bytes);
        Ok(())
    }

    /// Takes a buffer's bytes out of device memory (for a kernel call).
    fn take(&mut self, p: DevicePtr) -> Result<Vec<u8>, DeviceError> {
        Ok(std::mem::take(&mut self.entry_mut(p)?.data))
    }

    fn put_back(&mut self, p: DevicePtr, data: Vec<u8>) {
        if let Ok(a) = self.entry_mut(p) {
            a.data = data;
        }
    }

    /// Books a transfer of `bytes` on `stream`. Transfers keep stream order
    /// but do not consume compute occupancy.
    pub fn book_transfer(
        &mut self,
        stream: usize,
        ready: u64,
        bytes: u64,
        measured_ns: Option<u64>,
    ) -> Result<CompletionToken, DeviceError> {
        if stream >= self.timeline.streams() {
            return Err(DeviceError::StreamOutOfRange(stream));
        }
        let dur = match (self.timing.clock, measured_ns) {
            (ClockKind::Real, Some(m)) => m,
            _ => self.timing.transfer_ns(bytes),
        };
        let b = self.timeline.book(stream, ready, dur, 0.0);
        Ok(CompletionToken {
            device: self.desc.id,
            start: b.start,
            end: b.end,
        })
    }

    /// Runs `k` over the given device buffers and books its execution on
    /// `stream` no earlier than `ready`.
    pub fn launch(
        &mut self,
        stream: usize,
        k: &KernelImpl,
        args: &[DevicePtr],
        scalars: &[u8],
        ready: u64,
    ) -> Result<CompletionToken, DeviceError> {
        if !self.desc.supports(&k.name) {
            return Err(DeviceError::KernelUnsupported(k.name.clone()));
        }
        if stream >= self.timeline.streams() {
            return Err(DeviceError::StreamOutOfRange(stream));
        }
        let mut taken = Vec::with_capacity(args.len());
        for p in args {
            match self.take(*p) {
                Ok(d) => taken.push(d),
                Err(e) => {
                    for (p, d) in args.iter().zip(taken) {
                        self.put_back(*p, d);
                    }
                    return Err(e);
                }
            }
        }
        let mut ka = KernelArgs {
            buffers: taken,
            directions: Vec::new(),
            scalars: scalars.to_vec(),
            virtual_time: self.timing.clock == ClockKind::Virtual,
        };
        let t0 = Instant::now();
        let result = (k.run)(&mut ka);
        let measured = t0.elapsed().as_nanos() as u64;
        let base = match self.timing.clock {
            ClockKind::Real => measured,
            ClockKind::Virtual => (k.cost)(&ka),
        };
        for (p, d) in args.iter().zip(std::mem::take(&mut ka.buffers)) {
            self.put_back(*p, d);
        }
        result?;
        let mut dur = (base as f64 * (1.0 + self.desc.speed_factor)).round() as u64;
        if self.desc.device_type == DeviceType::SimFpga
            && self.loaded_kernel.as_deref() != Some(k.name.as_str())
        {
            if self.loaded_kernel.is_some() {
                dur += self.desc.reload_penalty_ns;
                self.reload_ns_total += self.desc.reload_penalty_ns;
            }
            self.loaded_kernel = Some(k.name.clone());
        }
        let b = self.timeline.book(stream, ready, dur, k.occupancy);
        self.busy_ns += dur as f64 * k.occupancy;
        self.launches += 1;
        self.last_launch = self.last_launch.max(b.start);
        Ok(CompletionToken {
            device: self.desc.id,
            start: b.start,
            end: b.end,
        })
    }

    pub fn retire(&mut self, now: u64) {
        self.timeline.retire(now);
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    /// Occupancy-weighted compute time booked so far.
    pub fn busy_ns(&self) -> u64 {
        self.busy_ns.round() as u64
    }

    pub fn launches(&self) -> u64 {
        self.launches
    }

    pub fn last_launch(&self) -> u64 {
        self.last_launch
    }

    pub fn reload_ns_total(&self) -> u64 {
        self.reload_ns_total
    }

    /// Allocations recorded for buffer `tag`.
    pub fn allocations_of(&self, tag: BufferId) -> Vec<DevicePtr> {
        self.allocs
            .iter()
            .filter(|(_, a)| a.tag == Some(tag))
            .map(|(h, _)| self.ptr(*h))
            .collect()
    }

    /// Bytes held per tagged buffer.
    pub fn tagged_bytes(&self) -> BTreeMap<BufferId, u64> {
        let mut m = BTreeMap::new();
        for a in self.allocs.values() {
            if let Some(t) = a.tag {
                *m.entry(t).or_insert(0) += a.data.len() as u64;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dev(mem: u64) -> Device {
        let mut d = DeviceDescriptor::new(0, "d0", DeviceType::SimGpu);
        d.mem_capacity = mem;
        d.streams = 2;
        Device::new(d, TimingModel::default())
    }

    #[test]
    fn alloc_accounting_and_oom() {
        let mut d = dev(64 << 20);
        let p = d.alloc(1 << 20, None).unwrap();
        assert_eq!(d.used(), 1 << 20);
        assert!(matches!(
            d.alloc(64 << 20, None),
            Err(DeviceError::OutOfMemory { .. })
        ));
        d.free(p).unwrap();
        assert_eq!(d.free(p), Err(DeviceError::DoubleFree(p.handle)));
        assert_eq!(d.used(), 0);
    }

    #[test]
    fn memset_sync_devcpy_roundtrip() {
        let mut d = dev(1 << 20);
        let a = d.alloc(4096, None).unwrap();
        let b = d.alloc(4096, None).unwrap();
        d.memset(a, 0, 4096, 0).unwrap();
        let mut out = vec![1u8; 4096];
        d.sync_from(a, 0, &mut out).unwrap();
        assert!(out.iter().all(|&x| x == 0));
        let x: Vec<u8> = (0..4096).map(|i| (i * 7) as u8).collect();
        d.sync_to(a, 0, &x).unwrap();
        d.devcpy(b, 0, a, 0, 4096).unwrap();
        d.sync_from(b, 0, &mut out).unwrap();
        assert_eq!(out, x);
        assert!(matches!(
            d.sync_to(a, 4000, &x[..200]),
            Err(DeviceError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn cross_device_copy_rejected() {
        let mut d0 = dev(1 << 20);
        let mut d1 = {
            let mut desc = DeviceDescriptor::new(1, "d1", DeviceType::Cpu);
            desc.mem_capacity = 1 << 20;
            Device::new(desc, TimingModel::default())
        };
        let a = d0.alloc(16, None).unwrap();
        let b = d1.alloc(16, None).unwrap();
        assert_eq!(d0.devcpy(a, 0, b, 0, 16), Err(DeviceError::CrossDevice(1, 0)));
        assert_eq!(d0.sync_to(b, 0, &[0; 4]), Err(DeviceError::CrossDevice(1, 0)));
    }

    #[test]
    fn launch_unsupported_and_bad_stream() {
        let mut desc = DeviceDescriptor::new(0, "d", DeviceType::SimGpu);
        desc.kernel_set = Some(vec!["noop".into()]);
        let mut d = Device::new(desc, TimingModel::default());
        let k = standard_kernel("vec_increment").unwrap();
        assert_eq!(
            d.launch(0, &k, &[], &[], 0),
            Err(DeviceError::KernelUnsupported("vec_increment".into()))
        );
        let noop = standard_kernel("noop").unwrap();
        assert_eq!(
            d.launch(9, &noop, &[], &[], 0),
            Err(DeviceError::StreamOutOfRange(9))
        );
    }

    fn delay_kernel(occ: f64) -> KernelImpl {
        standard_kernel("delay").unwrap().with_occupancy(occ)
    }

    #[test]
    fn quarter_kernels_overlap_full_kernels_serialize() {
        let d_ns = 10_000_000u64;
        let s = d_ns.to_le_bytes();
        let mut d = dev(1 << 20);
        let a = d.launch(0, &delay_kernel(0.25), &[], &s, 0).unwrap();
        let b = d.launch(1, &delay_kernel(0.25), &[], &s, 0).unwrap();
        let makespan = a.end.max(b.end) as f64;
        assert!((makespan - d_ns as f64).abs() <= 0.2 * d_ns as f64);

        let mut d = dev(1 << 20);
        let a = d.launch(0, &delay_kernel(1.0), &[], &s, 0).unwrap();
        let b = d.launch(1, &delay_kernel(1.0), &[], &s, 0).unwrap();
        let makespan = a.end.max(b.end) as f64;
        assert!((makespan - 2.0 * d_ns as f64).abs() <= 0.2 * d_ns as f64);
    }

    #[test]
    fn speed_factor_scales_duration() {
        let s = 1_000_000u64.to_le_bytes();
        for (sf, expect) in [(0.0, 1_000_000u64), (1.0, 2_000_000)] {
            let mut desc = DeviceDescriptor::new(0, "d", DeviceType::SimGpu);
            desc.speed_factor = sf;
            let mut d = Device::new(desc, TimingModel::default());
            let t = d.launch(0, &delay_kernel(0.25), &[], &s, 0).unwrap();
            assert_eq!(t.end - t.start, expect);
        }
    }

    #[test]
    fn fpga_reload_penalty_on_switch() {
        let mut desc = DeviceDescriptor::new(0, "f", DeviceType::SimFpga);
        desc.kernel_set = Some(vec!["noop".into(), "vec_increment".into()]);
        desc.reload_penalty_ns = 50_000_000;
        desc.streams = 1;
        let mut d = Device::new(desc, TimingModel::default());
        let buf = d.alloc(16, None).unwrap();
        let a = standard_kernel("noop").unwrap();
        let b = standard_kernel("vec_increment").unwrap();
        for k in [&a, &b, &a, &b] {
            let args: &[DevicePtr] = if k.name == "noop" { &[] } else { &[buf] };
            d.launch(0, k, args, &[], 0).unwrap();
        }
        assert!(d.reload_ns_total() >= 150_000_000);
    }

    #[test]
    fn real_clock_uses_measured_time() {
        let mut desc = DeviceDescriptor::new(0, "d", DeviceType::Cpu);
        desc.speed_factor = 1.0;
        let timing = TimingModel {
            clock: ClockKind::Real,
            ..Default::default()
        };
        let mut d = Device::new(desc, timing);
        let ns = 2_000_000u64;
        let t = d.launch(0, &delay_kernel(0.25), &[], &ns.to_le_bytes(), 0).unwrap();
        assert!(t.end - t.start >= 2 * ns);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Set(u16, u16, u8),
        Write(u16, Vec<u8>),
        Copy(u16, u16, u16),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u16..1024, 0u16..1024, any::<u8>()).prop_map(|(o, l, v)| Op::Set(o, l, v)),
            (0u16..1024, proptest::collection::vec(any::<u8>(), 0..128)).prop_map(|(o, b)| Op::Write(o, b)),
            (0u16..1024, 0u16..1024, 0u16..512).prop_map(|(d, s, l)| Op::Copy(d, s, l)),
        ]
    }

    proptest! {
        #[test]
        fn data_movement_matches_byte_array(ops in proptest::collection::vec(op(), 1..1000)) {
            let mut d = dev(1 << 20);
            let a = d.alloc(1024, None).unwrap();
            let b = d.alloc(1024, None).unwrap();
            let mut ra = vec![0u8; 1024];
            let mut rb = vec![0u8; 1024];
            for o in ops {
                match o {
                    Op::Set(off, len, v) => {
                        let ok = off as usize + len as usize <= 1024;
                        prop_assert_eq!(d.memset(a, off as u64, len as u64, v).is_ok(), ok);
                        if ok { ra[off as usize..(off + len) as usize].fill(v); }
                    }
                    Op::Write(off, bytes) => {
                        let ok = off as usize + bytes.len() <= 1024;
                        prop_assert_eq!(d.sync_to(a, off as u64, &bytes).is_ok(), ok);
                        if ok { ra[off as usize..off as usize + bytes.len()].copy_from_slice(&bytes); }
                    }
                    Op::Copy(dst, src, len) => {
                        let ok = dst as usize + len as usize <= 1024 && src as usize + len as usize <= 1024;
                        prop_assert_eq!(d.devcpy(b, dst as u64, a, src as u64, len as u64).is_ok(), ok);
                        if ok {
                            rb[dst as usize..(dst + len) as usize].copy_from_slice(&ra[src as usize..(src + len) as usize]);
                        }
                    }
                }
            }
            let mut out = vec![0u8; 1024];
            d.sync_from(a, 0, &mut out).unwrap();
            prop_assert_eq!(&out, &ra);
            d.sync_from(b, 0, &mut out).unwrap();
            prop_assert_eq!(&out, &rb);
        }

        #[test]
        fn used_matches_counter(trace in proptest::collection::vec((any::<bool>(), 1u64..100_000), 1..200)) {
            let mut d = dev(4 << 20);
            let mut live: Vec<(DevicePtr, u64)> = Vec::new();
            let mut oracle = 0u64;
            for (alloc, size) in trace {
                if alloc || live.is_empty() {
                    match d.alloc(size, None) {
                        Ok(p) => { live.push((p, size)); oracle += size; }
                        Err(_) => prop_assert!(oracle + size > 4 << 20),
                    }
                } else {
                    let (p, s) = live.swap_remove(size as usize % live.len());
                    d.free(p).unwrap();
                    oracle -= s;
                }
                prop_assert_eq!(d.used(), oracle);
                prop_assert!(d.used() <= 4 << 20);
            }
        }
    }
}
