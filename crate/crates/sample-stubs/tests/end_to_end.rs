use std::sync::Arc;

use arax::server::{uniform_devices, Embedded, ServerConfig};
use arax::shm::SharedArena;
use arax::{PriorityClass, Session, TaskDescriptor, TaskStatus};
use arax_sample_stubs::client::{self, StubError, STUB_COUNT};
use arax_sample_stubs::server::STUB_FUNCTIONS;
use arax_sample_stubs::{sample_dispatch, sample_engine};
use proptest::prelude::*;

fn runtime(devices: usize) -> Embedded {
    let cfg = ServerConfig::with_devices(uniform_devices(devices));
    let arena = Arc::new(SharedArena::create_local("stubs", 64 << 20).unwrap());
    let (engine, _) = sample_engine(arena, cfg).unwrap();
    Embedded::from_engine(engine)
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn bytes_f32(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

/// saxpy issued by hand through the client API.
fn saxpy_by_hand(s: &Session, q: &arax::TaskQueueHandle, y: &[f32], x: &[f32], alpha: f32) -> Vec<f32> {
    let n = y.len() as u64 * 4;
    let yb = s.a_allocate(n.max(1)).unwrap();
    let xb = s.a_allocate(n.max(1)).unwrap();
    s.a_sync_to(q, &yb, &f32_bytes(y)).unwrap();
    s.a_sync_to(q, &xb, &f32_bytes(x)).unwrap();
    let d = TaskDescriptor::new("saxpy")
        .inout(&yb)
        .input(&xb)
        .scalar_i32(y.len() as i32)
        .scalar_f32(alpha);
    s.a_issue(q, &d).unwrap();
    let mut h = s.a_sync_from_vec(q, &yb, n).unwrap();
    assert_eq!(s.a_wait(&mut h).unwrap(), TaskStatus::Success);
    let out = bytes_f32(&h.into_output().unwrap());
    s.a_free(&yb).unwrap();
    s.a_free(&xb).unwrap();
    out
}

#[test]
fn every_function_has_a_stub_and_a_registration_slot() {
    assert_eq!(STUB_COUNT, 200);
    assert_eq!(STUB_FUNCTIONS.len(), 200);
    let (table, missing) = sample_dispatch(&ServerConfig::with_devices(uniform_devices(1)));
    let known: Vec<&str> = table.names().collect();
    assert_eq!(known.len() + missing.len(), 200);
    for k in ["noop", "delay", "memcopy", "vec_increment", "saxpy", "gaussian_step", "grid_relax", "path_dp", "mat_mul_f32"] {
        assert!(known.contains(&k), "{k}");
    }
}

#[test]
fn saxpy_stub_matches_hand_written_calls() {
    let rt = runtime(2);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();
    let x: Vec<f32> = (0..100).map(|i| i as f32 * 0.5).collect();
    let y0: Vec<f32> = (0..100).map(|i| 100.0 - i as f32).collect();
    let by_hand = saxpy_by_hand(&s, &q, &y0, &x, 3.0);
    let mut y = y0.clone();
    assert_eq!(client::saxpy(&s, &q, &mut y, &x, 100, 3.0).unwrap(), TaskStatus::Success);
    assert_eq!(y, by_hand);
    let host: Vec<f32> = y0.iter().zip(&x).map(|(y, x)| y + 3.0 * x).collect();
    assert_eq!(y, host);
    assert_eq!(s.outstanding_tasks(), 0);
}

#[test]
fn increment_and_path_stubs_agree_with_host_oracles() {
    let rt = runtime(1);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();

    let mut data: Vec<i32> = (-10..54).collect();
    let expect: Vec<i32> = data.iter().map(|v| v + 1).collect();
    client::vec_increment(&s, &q, &mut data, 64).unwrap();
    assert_eq!(data, expect);

    let (rows, cols) = (5usize, 4usize);
    let wall: Vec<i32> = (0..rows * cols).map(|i| ((i * 37) % 11) as i32).collect();
    let mut result = vec![-1i32; cols];
    client::path_dp(&s, &q, &wall, &mut result, rows as i32, cols as i32).unwrap();
    let mut best: Vec<i32> = wall[..cols].to_vec();
    for r in 1..rows {
        best = (0..cols)
            .map(|j| {
                let lo = j.saturating_sub(1);
                let hi = (j + 1).min(cols - 1);
                wall[r * cols + j] + best[lo..=hi].iter().min().unwrap()
            })
            .collect();
    }
    assert_eq!(result, best);
}

#[test]
fn annotated_void_pointer_copy_round_trips() {
    let rt = runtime(1);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();
    let src: Vec<u8> = (0..=255).collect();
    let mut dst = vec![0u8; 256];
    client::memcopy(&s, &q, &mut dst, &src, 200).unwrap();
    assert_eq!(&dst[..200], &src[..200]);
    assert!(dst[200..].iter().all(|&b| b == 0));
}

#[test]
fn device_space_parameter_takes_a_runtime_buffer() {
    let rt = runtime(1);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();
    let buf = s.a_allocate(64).unwrap();
    client::dev_fill_f32(&s, &q, &buf, 10, 2.5).unwrap();
    let mut h = s.a_sync_from_vec(&q, &buf, 64).unwrap();
    s.a_wait(&mut h).unwrap();
    let got = bytes_f32(&h.into_output().unwrap());
    assert_eq!(&got[..10], &[2.5; 10]);
    assert_eq!(&got[10..], &[0.0; 6]);
}

#[test]
fn short_slices_are_refused_before_anything_is_issued() {
    let rt = runtime(1);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();
    let mut y = vec![0f32; 4];
    let err = client::saxpy(&s, &q, &mut y, &[1.0; 8], 8, 1.0).unwrap_err();
    assert!(matches!(err, StubError::ShortSlice { param: "y", need: 32, have: 16 }), "{err}");
    assert_eq!(s.outstanding_tasks(), 0);
}

#[test]
fn entry_point_without_an_implementation_fails_cleanly() {
    let rt = runtime(1);
    let s = rt.session(PriorityClass::Low);
    let q = s.a_acquire().unwrap();
    let mut v = vec![1.0f32; 8];
    let err = client::vec_abs_f32(&s, &q, &mut v, 8).unwrap_err();
    assert!(matches!(err, StubError::Failed(TaskStatus::UnknownKernel)), "{err}");
    assert_eq!(v, vec![1.0; 8]);
    // the queue stays usable
    client::noop(&s, &q).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mat_mul_stub_matches_host_product(m in 1usize..6, k in 1usize..6, p in 1usize..6, seed in any::<u32>()) {
        let rt = runtime(1);
        let s = rt.session(PriorityClass::Low);
        let q = s.a_acquire().unwrap();
        let val = |i: usize| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 17) as f32 - 8.0;
        let a: Vec<f32> = (0..m * k).map(val).collect();
        let b: Vec<f32> = (0..k * p).map(|i| val(i + 1000)).collect();
        let mut c = vec![f32::NAN; m * p];
        client::mat_mul_f32(&s, &q, &mut c, &a, &b, m as i32, k as i32, p as i32).unwrap();
        for i in 0..m {
            for j in 0..p {
                let want: f32 = (0..k).map(|x| a[i * k + x] * b[x * p + j]).sum();
                prop_assert_eq!(c[i * p + j], want);
            }
        }
    }

    #[test]
    fn vec_add_stub_matches_host(xs in prop::collection::vec(-1e6f32..1e6, 0..200)) {
        let rt = runtime(1);
        let s = rt.session(PriorityClass::Low);
        let q = s.a_acquire().unwrap();
        let ys: Vec<f32> = xs.iter().map(|v| v * 0.25).collect();
        let mut out = vec![0f32; xs.len()];
        client::vec_add2_f32(&s, &q, &mut out, &xs, &ys, xs.len() as u64).unwrap();
        let want: Vec<f32> = xs.iter().zip(&ys).map(|(a, b)| a + b).collect();
        prop_assert_eq!(out, want);
    }
}
