//! Kernel plug-ins, the dispatch table and the bundled kernel library.
//!
//! Every kernel is a plain CPU function over byte buffers, so a given input
//! produces the same output on every device; devices differ only in timing.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::DeviceType;
use crate::wire::Direction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("bad kernel arguments: {0}")]
    BadArgs(String),
}

fn bad(msg: impl Into<String>) -> KernelError {
    KernelError::BadArgs(msg.into())
}

/// Arguments handed to a kernel function. Buffers are moved out of device
/// memory for the duration of the call.
#[derive(Debug, Default)]
pub struct KernelArgs {
    pub buffers: Vec<Vec<u8>>,
    pub directions: Vec<Direction>,
    pub scalars: Vec<u8>,
    /// Set when the device is timed by the cost model rather than by the
    /// wall clock; kernels that only model delay skip sleeping.
    pub virtual_time: bool,
}

impl KernelArgs {
    pub fn expect_buffers(&self, n: usize) -> Result<(), KernelError> {
        if self.buffers.len() < n {
            return Err(bad(format!("expected {n} buffers, got {}", self.buffers.len())));
        }
        Ok(())
    }

    pub fn scalar_reader(&self) -> ScalarReader<'_> {
        ScalarReader {
            bytes: &self.scalars,
            pos: 0,
        }
    }
}

/// Sequential little-endian reader over a scalar blob.
pub struct ScalarReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

macro_rules! reader {
    ($name:ident, $t:ty) => {
        pub fn $name(&mut self) -> Result<$t, KernelError> {
            const N: usize = std::mem::size_of::<$t>();
            let b = self
                .bytes
                .get(self.pos..self.pos + N)
                .ok_or_else(|| bad(concat!("scalar blob too short for ", stringify!($t))))?;
            self.pos += N;
            Ok(<$t>::from_le_bytes(b.try_into().unwrap()))
        }
    };
}

impl ScalarReader<'_> {
    reader!(i32, i32);
    reader!(u32, u32);
    reader!(u64, u64);
    reader!(f32, f32);

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub type KernelFn = Arc<dyn Fn(&mut KernelArgs) -> Result<(), KernelError> + Send + Sync>;
/// Modeled execution time in nanoseconds at speed factor 0.
pub type CostFn = Arc<dyn Fn(&KernelArgs) -> u64 + Send + Sync>;

#[derive(Clone)]
pub struct KernelImpl {
    pub name: String,
    pub occupancy: f64,
    pub run: KernelFn,
    pub cost: CostFn,
}

impl KernelImpl {
    pub fn new(
        name: impl Into<String>,
        occupancy: f64,
        run: impl Fn(&mut KernelArgs) -> Result<(), KernelError> + Send + Sync + 'static,
        cost: impl Fn(&KernelArgs) -> u64 + Send + Sync + 'static,
    ) -> Self {
        assert!(
            occupancy > 0.0 && occupancy <= 1.0,
            "occupancy must be in (0, 1]"
        );
        KernelImpl {
            name: name.into(),
            occupancy,
            run: Arc::new(run),
            cost: Arc::new(cost),
        }
    }

    pub fn with_occupancy(mut self, occupancy: f64) -> Self {
        assert!(occupancy > 0.0 && occupancy <= 1.0);
        self.occupancy = occupancy;
        self
    }
}

impl fmt::Debug for KernelImpl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelImpl")
            .field("name", &self.name)
            .field("occupancy", &self.occupancy)
            .finish()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DispatchError {
    #[error("kernel {0:?} already registered for {1}")]
    Duplicate(String, DeviceType),
}

/// kernel name → device type → implementation.
#[derive(Clone, Debug, Default)]
pub struct DispatchTable {
    map: BTreeMap<String, BTreeMap<DeviceType, KernelImpl>>,
}

impl DispatchTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_kernel(
        &mut self,
        name: &str,
        device_type: DeviceType,
        k: KernelImpl,
    ) -> Result<(), DispatchError> {
        let per_type = self.map.entry(name.to_string()).or_default();
        if per_type.contains_key(&device_type) {
            return Err(DispatchError::Duplicate(name.to_string(), device_type));
        }
        per_type.insert(device_type, k);
        Ok(())
    }

    pub fn lookup(&self, name: &str, device_type: DeviceType) -> Option<&KernelImpl> {
        self.map.get(name)?.get(&device_type)
    }

    pub fn is_known(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn device_types(&self, name: &str) -> Vec<DeviceType> {
        self.map
            .get(name)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }
}

fn f32s(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn put_f32s(dst: &mut [u8], v: &[f32]) {
    for (c, x) in dst.chunks_exact_mut(4).zip(v) {
        c.copy_from_slice(&x.to_le_bytes());
    }
}

fn i32s(b: &[u8]) -> Vec<i32> {
    b.chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn dim(v: i32, what: &str) -> Result<usize, KernelError> {
    usize::try_from(v).map_err(|_| bad(format!("{what} must be non-negative")))
}

const LAUNCH_NS: u64 = 1_000;

fn noop() -> KernelImpl {
    KernelImpl::new("noop", 0.25, |_| Ok(()), |_| LAUNCH_NS)
}

/// Sleeps (wall clock) or is charged (virtual clock) for `ns: u64` nanoseconds.
fn delay() -> KernelImpl {
    KernelImpl::new(
        "delay",
        0.25,
        |a| {
            let ns = a.scalar_reader().u64()?;
            if !a.virtual_time {
                std::thread::sleep(std::time::Duration::from_nanos(ns));
            }
            Ok(())
        },
        |a| a.scalar_reader().u64().unwrap_or(0),
    )
}

/// args: dst (out), src (in); scalars: n u64 bytes (optional, default min size).
fn memcopy() -> KernelImpl {
    fn len(a: &KernelArgs) -> usize {
        let cap = a.buffers.iter().take(2).map(Vec::len).min().unwrap_or(0);
        match a.scalar_reader().u64() {
            Ok(n) => (n as usize).min(cap),
            Err(_) => cap,
        }
    }
    KernelImpl::new(
        "memcopy",
        0.25,
        |a| {
            a.expect_buffers(2)?;
            let n = len(a);
            let (dst, src) = a.buffers.split_at_mut(1);
            dst[0][..n].copy_from_slice(&src[0][..n]);
            Ok(())
        },
        |a| LAUNCH_NS + len(a) as u64 / 8,
    )
}

/// args: data (inout i32[]); scalars: n i32 (optional, default whole buffer).
fn vec_increment() -> KernelImpl {
    fn count(a: &KernelArgs) -> usize {
        let cap = a.buffers.first().map_or(0, |b| b.len() / 4);
        match a.scalar_reader().i32() {
            Ok(n) if n >= 0 => (n as usize).min(cap),
            _ => cap,
        }
    }
    KernelImpl::new(
        "vec_increment",
        0.25,
        |a| {
            a.expect_buffers(1)?;
            let n = count(a);
            for c in a.buffers[0].chunks_exact_mut(4).take(n) {
                let v = i32::from_le_bytes(c.try_into().unwrap()).wrapping_add(1);
                c.copy_from_slice(&v.to_le_bytes());
            }
            Ok(())
        },
        |a| LAUNCH_NS + count(a) as u64,
    )
}

/// y[i] += alpha * x[i]. args: y (inout f32[]), x (in f32[]); scalars: n i32, alpha f32.
fn saxpy() -> KernelImpl {
    KernelImpl::new(
        "saxpy",
        0.25,
        |a| {
            a.expect_buffers(2)?;
            let mut r = a.scalar_reader();
            let n = dim(r.i32()?, "n")?;
            let alpha = r.f32()?;
            if a.buffers[0].len() < n * 4 || a.buffers[1].len() < n * 4 {
                return Err(bad("saxpy buffers shorter than n"));
            }
            let x = f32s(&a.buffers[1][..n * 4]);
            let mut y = f32s(&a.buffers[0][..n * 4]);
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi += alpha * xi;
            }
            put_f32s(&mut a.buffers[0], &y);
            Ok(())
        },
        |a| LAUNCH_NS + 2 * a.scalar_reader().i32().unwrap_or(0).max(0) as u64,
    )
}

/// One elimination step: zero column `t` below the pivot.
/// args: a (inout f32[n*n]), b (inout f32[n]); scalars: n i32, t i32.
fn gaussian_step() -> KernelImpl {
    fn dims(a: &KernelArgs) -> Result<(usize, usize), KernelError> {
        let mut r = a.scalar_reader();
        let n = dim(r.i32()?, "n")?;
        let t = dim(r.i32()?, "t")?;
        if t >= n.max(1) {
            return Err(bad("t must be < n"));
        }
        Ok((n, t))
    }
    KernelImpl::new(
        "gaussian_step",
        1.0,
        |a| {
            a.expect_buffers(2)?;
            let (n, t) = dims(a)?;
            if a.buffers[0].len() < n * n * 4 || a.buffers[1].len() < n * 4 {
                return Err(bad("gaussian_step buffers shorter than n"));
            }
            let mut m = f32s(&a.buffers[0][..n * n * 4]);
            let mut b = f32s(&a.buffers[1][..n * 4]);
            let pivot = m[t * n + t];
            if pivot != 0.0 {
                for i in t + 1..n {
                    let mult = m[i * n + t] / pivot;
                    for j in t..n {
                        m[i * n + j] -= mult * m[t * n + j];
                    }
                    b[i] -= mult * b[t];
                }
            }
            put_f32s(&mut a.buffers[0], &m);
            put_f32s(&mut a.buffers[1], &b);
            Ok(())
        },
        |a| match dims(a) {
            Ok((n, t)) => LAUNCH_NS + 2 * ((n - t) * n) as u64,
            Err(_) => LAUNCH_NS,
        },
    )
}

/// Jacobi 7-point relaxation with clamped borders.
/// args: grid (inout f32[nx*ny*nz]); scalars: nx, ny, nz, iters (i32).
fn grid_relax() -> KernelImpl {
    fn dims(a: &KernelArgs) -> Result<[usize; 4], KernelError> {
        let mut r = a.scalar_reader();
        Ok([
            dim(r.i32()?, "nx")?,
            dim(r.i32()?, "ny")?,
            dim(r.i32()?, "nz")?,
            dim(r.i32()?, "iters")?,
        ])
    }
    KernelImpl::new(
        "grid_relax",
        0.25,
        |a| {
            a.expect_buffers(1)?;
            let [nx, ny, nz, iters] = dims(a)?;
            let cells = nx * ny * nz;
            if a.buffers[0].len() < cells * 4 {
                return Err(bad("grid smaller than nx*ny*nz"));
            }
            let mut g = f32s(&a.buffers[0][..cells * 4]);
            let mut next = g.clone();
            let at = |x: usize, y: usize, z: usize| (z * ny + y) * nx + x;
            for _ in 0..iters {
                for z in 0..nz {
                    for y in 0..ny {
                        for x in 0..nx {
                            let c = g[at(x, y, z)];
                            let s = g[at(x.saturating_sub(1), y, z)]
                                + g[at((x + 1).min(nx - 1), y, z)]
                                + g[at(x, y.saturating_sub(1), z)]
                                + g[at(x, (y + 1).min(ny - 1), z)]
                                + g[at(x, y, z.saturating_sub(1))]
                                + g[at(x, y, (z + 1).min(nz - 1))];
                            next[at(x, y, z)] = (c + s) / 7.0;
                        }
                    }
                }
                std::mem::swap(&mut g, &mut next);
            }
            put_f32s(&mut a.buffers[0], &g);
            Ok(())
        },
        |a| match dims(a) {
            Ok([nx, ny, nz, it]) => LAUNCH_NS + 4 * (nx * ny * nz * it) as u64,
            Err(_) => LAUNCH_NS,
        },
    )
}

/// Minimum-cost top-to-bottom path, moving at most one column per row.
/// args: wall (in i32[rows*cols]), result (out i32[cols]); scalars: rows, cols (i32).
fn path_dp() -> KernelImpl {
    fn dims(a: &KernelArgs) -> Result<(usize, usize), KernelError> {
        let mut r = a.scalar_reader();
        Ok((dim(r.i32()?, "rows")?, dim(r.i32()?, "cols")?))
    }
    KernelImpl::new(
        "path_dp",
        0.25,
        |a| {
            a.expect_buffers(2)?;
            let (rows, cols) = dims(a)?;
            if a.buffers[0].len() < rows * cols * 4 || a.buffers[1].len() < cols * 4 {
                return Err(bad("path_dp buffers too small"));
            }
            let wall = i32s(&a.buffers[0][..rows * cols * 4]);
            let mut prev: Vec<i32> = wall.iter().take(cols).copied().collect();
            for r in 1..rows {
                let row = &wall[r * cols..(r + 1) * cols];
                let mut cur = vec![0i32; cols];
                for j in 0..cols {
                    let mut best = prev[j];
                    if j > 0 {
                        best = best.min(prev[j - 1]);
                    }
                    if j + 1 < cols {
                        best = best.min(prev[j + 1]);
                    }
                    cur[j] = row[j].wrapping_add(best);
                }
                prev = cur;
            }
            for (c, v) in a.buffers[1].chunks_exact_mut(4).zip(&prev) {
                c.copy_from_slice(&v.to_le_bytes());
            }
            Ok(())
        },
        |a| match dims(a) {
            Ok((r, c)) => LAUNCH_NS + 2 * (r * c) as u64,
            Err(_) => LAUNCH_NS,
        },
    )
}

/// The bundled kernel library.
pub fn standard_library() -> Vec<KernelImpl> {
    vec![
        noop(),
        delay(),
        memcopy(),
        vec_increment(),
        saxpy(),
        gaussian_step(),
        grid_relax(),
        path_dp(),
    ]
}

pub fn standard_kernel(name: &str) -> Option<KernelImpl> {
    standard_library().into_iter().find(|k| k.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(name: &str, buffers: Vec<Vec<u8>>, scalars: Vec<u8>) -> Result<Vec<Vec<u8>>, KernelError> {
        let k = standard_kernel(name).unwrap();
        let mut a = KernelArgs {
            buffers,
            scalars,
            virtual_time: true,
            ..Default::default()
        };
        (k.run)(&mut a)?;
        Ok(a.buffers)
    }

    fn le_i32(v: &[i32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    fn le_f32(v: &[f32]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn dispatch_duplicate_and_lookup() {
        let mut d = DispatchTable::new();
        d.register_kernel("gaussian_step", DeviceType::Cpu, gaussian_step())
            .unwrap();
        assert!(d.lookup("gaussian_step", DeviceType::Cpu).is_some());
        assert!(d.lookup("gaussian_step", DeviceType::SimGpu).is_none());
        assert_eq!(
            d.register_kernel("gaussian_step", DeviceType::Cpu, gaussian_step()),
            Err(DispatchError::Duplicate("gaussian_step".into(), DeviceType::Cpu))
        );
    }

    #[test]
    fn vec_increment_partial_and_full() {
        let out = run("vec_increment", vec![le_i32(&[1, 2, 3])], 2i32.to_le_bytes().to_vec()).unwrap();
        assert_eq!(out[0], le_i32(&[2, 3, 3]));
        let out = run("vec_increment", vec![le_i32(&[1, 2, 3])], vec![]).unwrap();
        assert_eq!(out[0], le_i32(&[2, 3, 4]));
    }

    #[test]
    fn memcopy_copies_prefix() {
        let out = run("memcopy", vec![vec![0; 4], vec![1, 2, 3, 4]], 3u64.to_le_bytes().to_vec()).unwrap();
        assert_eq!(out[0], vec![1, 2, 3, 0]);
    }

    #[test]
    fn gaussian_full_elimination_solves_system() {
        // 2x + y = 5, x + 3y = 10  → x = 1, y = 3
        let n: i32 = 2;
        let mut bufs = vec![le_f32(&[2.0, 1.0, 1.0, 3.0]), le_f32(&[5.0, 10.0])];
        for t in 0..n - 1 {
            let s: Vec<u8> = [n, t].iter().flat_map(|v| v.to_le_bytes()).collect();
            bufs = run("gaussian_step", bufs, s).unwrap();
        }
        let m = f32s(&bufs[0]);
        let b = f32s(&bufs[1]);
        let y = b[1] / m[3];
        let x = (b[0] - m[1] * y) / m[0];
        assert!((x - 1.0).abs() < 1e-6 && (y - 3.0).abs() < 1e-6);
    }

    #[test]
    fn grid_relax_preserves_uniform_field() {
        let s: Vec<u8> = [3i32, 3, 3, 5].iter().flat_map(|v| v.to_le_bytes()).collect();
        let out = run("grid_relax", vec![le_f32(&[2.0; 27])], s).unwrap();
        assert!(f32s(&out[0]).iter().all(|&v| (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn path_dp_small_grid() {
        // rows [1 9 1] [9 1 9] [1 9 1]
        let wall = le_i32(&[1, 9, 1, 9, 1, 9, 1, 9, 1]);
        let s: Vec<u8> = [3i32, 3].iter().flat_map(|v| v.to_le_bytes()).collect();
        let out = run("path_dp", vec![wall, vec![0; 12]], s).unwrap();
        assert_eq!(out[1], le_i32(&[3, 11, 3]));
    }

    #[test]
    fn saxpy_and_bad_args() {
        let mut s = 2i32.to_le_bytes().to_vec();
        s.extend(0.5f32.to_le_bytes());
        let out = run("saxpy", vec![le_f32(&[1.0, 1.0]), le_f32(&[2.0, 4.0])], s).unwrap();
        assert_eq!(f32s(&out[0]), vec![2.0, 3.0]);
        assert!(run("gaussian_step", vec![vec![], vec![]], vec![]).is_err());
        assert!(run("memcopy", vec![vec![0; 4]], vec![]).is_err());
    }
}
