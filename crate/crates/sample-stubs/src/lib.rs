//! Client stubs and server registrations for `sample_api.h`, generated at
//! build time by `stubgen`, plus host implementations for a few of its
//! entry points that the standard kernel library lacks.

use arax::backends::{standard_kernel, DeviceType, DispatchTable, KernelArgs, KernelError, KernelImpl};
use arax::server::{Engine, ServerConfig};

#[allow(dead_code, unused_parens, clippy::all)]
pub mod client {
    include!(concat!(env!("OUT_DIR"), "/client_stubs.rs"));
}

#[allow(dead_code, clippy::all)]
pub mod server {
    include!(concat!(env!("OUT_DIR"), "/server_dispatch.rs"));
}

fn bad(msg: &str) -> KernelError {
    KernelError::BadArgs(msg.to_string())
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap())
}

/// out[i] = lhs[i] + rhs[i] over `len: u64` floats.
fn vec_add2_f32() -> KernelImpl {
    KernelImpl::new(
        "vec_add2_f32",
        0.25,
        |a: &mut KernelArgs| {
            a.expect_buffers(3)?;
            let len = a.scalar_reader().u64()? as usize;
            if a.buffers.iter().take(3).any(|b| b.len() < len * 4) {
                return Err(bad("vec_add2_f32 buffers shorter than len"));
            }
            let (dst, rest) = a.buffers.split_at_mut(1);
            for i in 0..len {
                let v = f32_at(&rest[0], i) + f32_at(&rest[1], i);
                dst[0][i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
            }
            Ok(())
        },
        |a| 1_000 + a.scalar_reader().u64().unwrap_or(0),
    )
}

/// c = a (m x k) * b (k x p), row-major floats.
fn mat_mul_f32() -> KernelImpl {
    fn dims(a: &KernelArgs) -> Result<[usize; 3], KernelError> {
        let mut r = a.scalar_reader();
        let mut d = [0; 3];
        for x in &mut d {
            *x = usize::try_from(r.i32()?).map_err(|_| bad("negative dimension"))?;
        }
        Ok(d)
    }
    KernelImpl::new(
        "mat_mul_f32",
        1.0,
        |a| {
            a.expect_buffers(3)?;
            let [m, k, p] = dims(a)?;
            let (c, rest) = a.buffers.split_at_mut(1);
            if c[0].len() < m * p * 4 || rest[0].len() < m * k * 4 || rest[1].len() < k * p * 4 {
                return Err(bad("mat_mul_f32 buffers too small"));
            }
            for i in 0..m {
                for j in 0..p {
                    let mut acc = 0.0f32;
                    for x in 0..k {
                        acc += f32_at(&rest[0], i * k + x) * f32_at(&rest[1], x * p + j);
                    }
                    c[0][(i * p + j) * 4..(i * p + j) * 4 + 4].copy_from_slice(&acc.to_le_bytes());
                }
            }
            Ok(())
        },
        |a| dims(a).map_or(1_000, |[m, k, p]| 1_000 + (m * k * p) as u64),
    )
}

/// Fills `count: i32` floats of a device-resident buffer with `value: f32`.
fn dev_fill_f32() -> KernelImpl {
    KernelImpl::new(
        "dev_fill_f32",
        0.25,
        |a| {
            a.expect_buffers(1)?;
            let mut r = a.scalar_reader();
            let n = usize::try_from(r.i32()?).map_err(|_| bad("negative count"))?;
            let v = r.f32()?;
            let buf = &mut a.buffers[0];
            if buf.len() < n * 4 {
                return Err(bad("dev_fill_f32 buffer shorter than count"));
            }
            for c in buf.chunks_exact_mut(4).take(n) {
                c.copy_from_slice(&v.to_le_bytes());
            }
            Ok(())
        },
        |a| 1_000 + a.scalar_reader().i32().unwrap_or(0).max(0) as u64,
    )
}

/// Implementation for a sample entry point: the standard library first,
/// then the host implementations above.
pub fn sample_kernel(name: &str) -> Option<KernelImpl> {
    standard_kernel(name).or_else(|| match name {
        "vec_add2_f32" => Some(vec_add2_f32()),
        "mat_mul_f32" => Some(mat_mul_f32()),
        "dev_fill_f32" => Some(dev_fill_f32()),
        _ => None,
    })
}

/// Dispatch table for every device type in `cfg`. Returns the table and
/// the entry points left without an implementation.
pub fn sample_dispatch(cfg: &ServerConfig) -> (DispatchTable, Vec<&'static str>) {
    let mut types: Vec<DeviceType> = cfg.devices.iter().map(|d| d.device_type).collect();
    types.sort();
    types.dedup();
    let mut table = DispatchTable::new();
    let missing = server::register_stub_kernels(&mut table, &types, sample_kernel);
    (table, missing)
}

/// An engine whose dispatch table is built from the generated registrations.
pub fn sample_engine(
    arena: std::sync::Arc<arax::shm::SharedArena>,
    cfg: ServerConfig,
) -> Result<(Engine, Vec<&'static str>), arax::server::ConfigError> {
    let (table, missing) = sample_dispatch(&cfg);
    Ok((Engine::with_dispatch(arena, cfg, table)?, missing))
}
