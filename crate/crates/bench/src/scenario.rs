//! Built-in experiment scenarios and a randomized workload generator.
//!
//! A scenario is a workload plus one or more server configurations to run
//! it under; comparing the variants is the point of the experiment.

use std::collections::BTreeMap;

use arax::backends::{ClockKind, DeviceDescriptor, DeviceType};
use arax::server::{uniform_devices, Policy, ServerConfig, SharingMode};
use arax::Direction;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::driver::{run_workload_with, RunError, RunOptions, RunResult};
use crate::workload::{Arg, BufferSpec, Init, InstanceSpec, Priority, Scalar, Step, WorkloadSpec};

pub const SCENARIOS: [&str; 8] = [
    "launch_overhead",
    "transfer_sweep",
    "sharing_2x",
    "sharing_4x",
    "elastic_priority",
    "migration_stress",
    "hetero_elastic",
    "fifo_random",
];

#[derive(Debug, Error)]
#[error("unknown scenario {0:?} (try `list`)")]
pub struct UnknownScenario(pub String);

#[derive(Clone, Debug)]
pub struct Variant {
    pub label: String,
    pub workload: WorkloadSpec,
    pub config: ServerConfig,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub variants: Vec<Variant>,
}

impl Scenario {
    pub fn run(&self) -> Result<Vec<(String, RunResult)>, RunError> {
        self.variants
            .iter()
            .map(|v| {
                let opts = RunOptions {
                    arena_size: arena_for(&v.workload),
                    ..RunOptions::default()
                };
                let r = run_workload_with(&v.workload, &v.config, opts, &mut |_| {})?;
                Ok((v.label.clone(), r))
            })
            .collect()
    }

    pub fn variant(&self, label: &str) -> Option<&Variant> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Arena big enough for one staging copy of every buffer plus headroom.
pub fn arena_for(w: &WorkloadSpec) -> u64 {
    let mut bytes: u64 = w
        .expanded()
        .iter()
        .map(|i| {
            let probe = i
                .steps
                .iter()
                .map(|s| match s {
                    Step::TransferProbe { bytes, .. } => 2 * bytes,
                    _ => 0,
                })
                .max()
                .unwrap_or(0);
            u64::from(i.queues) * (i.buffers.iter().map(|b| b.size).sum::<u64>() * 2 + probe)
        })
        .sum();
    bytes += 16 << 20;
    bytes.max(32 << 20)
}

pub fn scenario(name: &str) -> Result<Scenario, UnknownScenario> {
    let one = |label: &str, workload: WorkloadSpec, config: ServerConfig| Variant {
        label: label.into(),
        workload,
        config,
    };
    let (description, variants) = match name {
        "launch_overhead" => (
            "10000 empty kernels on one queue; per-issue client cost",
            vec![one("shared", launch_overhead(10_000), virtual_config(1))],
        ),
        "transfer_sweep" => (
            "staged upload time against a plain copy, 4 KiB to 64 MiB",
            vec![one("real", transfer_sweep(64 << 20), real_config(1))],
        ),
        "sharing_2x" | "sharing_4x" => {
            let copies = if name == "sharing_2x" { 2 } else { 4 };
            let mut v = Vec::new();
            for occ in [0.25, 1.0] {
                let w = sharing(copies, 128, 3, occ);
                for mode in [SharingMode::Shared, SharingMode::Timeslice] {
                    let mut c = virtual_config(1);
                    c.mode = mode;
                    let m = if mode == SharingMode::Shared { "shared" } else { "timeslice" };
                    v.push(one(&format!("{m}-occ{occ}"), w.clone(), c));
                }
            }
            ("identical solvers sharing one device, shared against timesliced", v)
        }
        "elastic_priority" => {
            let e = ElasticSetup::default();
            (
                "a high-priority solver arrives while a two-queue job is spread out",
                vec![
                    one("elastic", e.both(), elastic_config(2)),
                    one("high-alone", e.high_only(), elastic_config(2)),
                    one("low-one-device", e.low_only(), virtual_config(1)),
                ],
            )
        }
        "migration_stress" => {
            let w = random_workload(17, 2_000, 6);
            let mut forced = virtual_config(3);
            forced.forced_migration_every = Some(1);
            (
                "random programs, every queue migrated after every task",
                vec![one("pinned", w.clone(), virtual_config(3)), one("forced", w, forced)],
            )
        }
        "hetero_elastic" => (
            "mixed kernels across cpu, gpu and fpga devices",
            vec![one("elastic", hetero_workload(), hetero_config())],
        ),
        "fifo_random" => (
            "random multi-queue programs on four devices",
            vec![one("shared", random_workload(1, 10_000, 8), virtual_config(4))],
        ),
        _ => return Err(UnknownScenario(name.into())),
    };
    Ok(Scenario {
        name: name.into(),
        description: description.into(),
        variants,
    })
}

pub fn virtual_config(devices: usize) -> ServerConfig {
    ServerConfig::with_devices(uniform_devices(devices))
}

pub fn real_config(devices: usize) -> ServerConfig {
    let mut c = virtual_config(devices);
    c.timing.clock = ClockKind::Real;
    c
}

pub fn elastic_config(devices: usize) -> ServerConfig {
    let mut c = virtual_config(devices);
    c.policy = Policy::Elastic;
    c.elastic_tick_ns = 1_000_000;
    c.elastic_idle_ns = 5_000_000;
    c
}

pub fn hetero_config() -> ServerConfig {
    let mut c = elastic_config(0);
    c.devices = vec![
        DeviceDescriptor::new(0, "cpu0", DeviceType::Cpu),
        DeviceDescriptor::new(1, "gpu0", DeviceType::SimGpu),
        DeviceDescriptor::new(2, "fpga0", DeviceType::SimFpga),
    ];
    c
}

fn buf(name: &str, size: u64, init: Init) -> BufferSpec {
    BufferSpec {
        name: name.into(),
        size,
        init,
    }
}

fn arg(buffer: &str, dir: Direction) -> Arg {
    Arg {
        buffer: buffer.into(),
        dir,
    }
}

fn kernel(name: &str, args: Vec<Arg>, scalars: Vec<Scalar>, repeat: u32) -> Step {
    Step::Kernel {
        kernel: name.into(),
        args,
        scalars,
        repeat,
    }
}

fn upload(b: &str) -> Step {
    Step::Upload { buffer: b.into() }
}

fn download(b: &str) -> Step {
    Step::Download { buffer: b.into() }
}

fn instance(name: &str, priority: Priority, queues: u32, buffers: Vec<BufferSpec>, steps: Vec<Step>) -> InstanceSpec {
    InstanceSpec {
        name: name.into(),
        priority,
        queues,
        copies: 1,
        arrival_us: 0,
        buffers,
        steps,
    }
}

fn workload(name: &str, description: &str, instances: Vec<InstanceSpec>) -> WorkloadSpec {
    WorkloadSpec {
        name: name.into(),
        description: description.into(),
        seed: 1,
        occupancy: BTreeMap::new(),
        kernel_types: BTreeMap::new(),
        instances,
    }
}

pub fn launch_overhead(n: u32) -> WorkloadSpec {
    workload(
        "launch_overhead",
        "back-to-back empty kernels",
        vec![instance(
            "noops",
            Priority::Low,
            1,
            vec![],
            vec![kernel("noop", vec![], vec![], n)],
        )],
    )
}

/// Probe sizes 4 KiB, 16 KiB, ... up to `max`.
pub fn transfer_sizes(max: u64) -> Vec<u64> {
    std::iter::successors(Some(4u64 << 10), |s| Some(s * 4))
        .take_while(|s| *s <= max)
        .collect()
}

pub fn transfer_sweep(max: u64) -> WorkloadSpec {
    let steps = transfer_sizes(max)
        .into_iter()
        .map(|bytes| Step::TransferProbe { bytes, reps: 9 })
        .collect();
    workload(
        "transfer_sweep",
        "staged uploads across sizes",
        vec![instance("probe", Priority::Low, 1, vec![], steps)],
    )
}

/// Steps for `solves` full eliminations of an n by n system.
fn solver_steps(n: u32, solves: u32) -> Vec<Step> {
    let mut steps = Vec::new();
    for _ in 0..solves {
        steps.push(upload("a"));
        steps.push(upload("b"));
        steps.push(kernel(
            "gaussian_step",
            vec![arg("a", Direction::InOut), arg("b", Direction::InOut)],
            vec![Scalar::i32(n as i32), Scalar::I32(crate::workload::IntValue::Iter)],
            n - 1,
        ));
        steps.push(download("b"));
    }
    steps
}

fn solver_buffers(n: u32) -> Vec<BufferSpec> {
    let n = u64::from(n);
    vec![buf("a", n * n * 4, Init::RandomF32), buf("b", n * 4, Init::RandomF32)]
}

/// `copies` single-queue solvers with the elimination kernel at `occupancy`.
pub fn sharing(copies: u32, n: u32, solves: u32, occupancy: f64) -> WorkloadSpec {
    let mut i = instance("solver", Priority::Low, 1, solver_buffers(n), solver_steps(n, solves));
    i.copies = copies;
    let mut w = workload(&format!("sharing_{copies}x"), "identical solvers on one device", vec![i]);
    w.occupancy.insert("gaussian_step".into(), occupancy);
    w
}

/// Virtual cost of one solve, in ns, ignoring transfers.
pub fn solve_cost_ns(n: u32) -> u64 {
    let n = u64::from(n);
    (0..n - 1).map(|t| 1_000 + 2 * (n - t) * n).sum()
}

#[derive(Clone, Copy, Debug)]
pub struct ElasticSetup {
    pub n: u32,
    pub low_solves: u32,
    pub high_solves: u32,
}

impl Default for ElasticSetup {
    fn default() -> Self {
        ElasticSetup {
            n: 160,
            low_solves: 16,
            high_solves: 6,
        }
    }
}

impl ElasticSetup {
    fn low(&self) -> InstanceSpec {
        instance(
            "low",
            Priority::Low,
            2,
            solver_buffers(self.n),
            solver_steps(self.n, self.low_solves),
        )
    }

    fn high(&self) -> InstanceSpec {
        let mut h = instance(
            "high",
            Priority::High,
            1,
            solver_buffers(self.n),
            solver_steps(self.n, self.high_solves),
        );
        h.arrival_us = self.high_arrival_us();
        h
    }

    /// A third of the way through the low job run on one device.
    pub fn high_arrival_us(&self) -> u64 {
        2 * u64::from(self.low_solves) * solve_cost_ns(self.n) / 3 / 1_000
    }

    pub fn both(&self) -> WorkloadSpec {
        workload("elastic_priority", "low job interrupted by a high one", vec![self.low(), self.high()])
    }

    pub fn high_only(&self) -> WorkloadSpec {
        workload("elastic_priority", "high job alone", vec![self.high()])
    }

    pub fn low_only(&self) -> WorkloadSpec {
        workload("elastic_priority", "low job alone", vec![self.low()])
    }
}

pub fn hetero_workload() -> WorkloadSpec {
    let (rows, cols) = (64, 256);
    let paths = instance(
        "paths",
        Priority::Low,
        2,
        vec![buf("wall", rows * cols * 4, Init::RandomI32), buf("result", cols * 4, Init::Zero)],
        vec![
            upload("wall"),
            kernel(
                "path_dp",
                vec![arg("wall", Direction::In), arg("result", Direction::Out)],
                vec![Scalar::i32(rows as i32), Scalar::i32(cols as i32)],
                200,
            ),
            download("result"),
        ],
    );
    let n = 1 << 14;
    let mut axpy = instance(
        "axpy",
        Priority::High,
        1,
        vec![buf("y", n * 4, Init::RandomF32), buf("x", n * 4, Init::RandomF32)],
        vec![
            upload("y"),
            upload("x"),
            kernel(
                "saxpy",
                vec![arg("y", Direction::InOut), arg("x", Direction::In)],
                vec![Scalar::i32(n as i32), Scalar::F32(0.5)],
                400,
            ),
            download("y"),
        ],
    );
    axpy.arrival_us = 2_000;
    let mut w = workload("hetero_elastic", "cpu-only and accelerator-only kernels", vec![paths, axpy]);
    w.kernel_types.insert("path_dp".into(), vec![DeviceType::Cpu]);
    w.kernel_types
        .insert("saxpy".into(), vec![DeviceType::SimGpu, DeviceType::SimFpga]);
    w
}

/// A random multi-instance workload with about `tasks` tasks over at most
/// `max_queues` queues. Every kernel used is deterministic, so outputs
/// depend only on per-queue order.
pub fn random_workload(seed: u64, tasks: u64, max_queues: u32) -> WorkloadSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_queues = rng.gen_range(1..=max_queues.max(1));
    let per_queue = (tasks / u64::from(total_queues)).max(8);
    let mut instances = Vec::new();
    let mut left = total_queues;
    while left > 0 {
        let q = rng.gen_range(1..=left.min(3));
        left -= q;
        let k = instances.len();
        let priority = if rng.gen_bool(0.25) { Priority::High } else { Priority::Low };
        let mut inst = random_instance(&mut rng, &format!("app{k}"), priority, q, per_queue);
        inst.arrival_us = rng.gen_range(0..200);
        instances.push(inst);
    }
    let mut w = workload(&format!("random_{seed}"), "generated", instances);
    w.seed = seed;
    w
}

fn random_instance(rng: &mut ChaCha8Rng, name: &str, priority: Priority, queues: u32, tasks: u64) -> InstanceSpec {
    let n: u64 = rng.gen_range(16..=512);
    let (rows, cols): (u64, u64) = (rng.gen_range(2..=16), rng.gen_range(4..=64));
    let buffers = vec![
        buf("v", n * 4, Init::RandomI32),
        buf("x", n * 4, Init::RandomF32),
        buf("y", n * 4, Init::RandomF32),
        buf("m", n * 4, Init::Zero),
        buf("w", rows * cols * 4, Init::RandomI32),
        buf("r", cols * 4, Init::Zero),
    ];
    let mut steps = vec![upload("v"), upload("x"), upload("y"), upload("w")];
    let finals = ["v", "y", "m", "r"];
    let mut count = 4 + finals.len() as u64;
    while count < tasks {
        let room = (tasks - count).clamp(1, 64) as u32;
        let reps = rng.gen_range(1..=room);
        let step = match rng.gen_range(0..9) {
            0 | 1 => kernel(
                "vec_increment",
                vec![arg("v", Direction::InOut)],
                vec![Scalar::i32(rng.gen_range(1..=n as i32))],
                reps,
            ),
            2 | 3 => kernel(
                "saxpy",
                vec![arg("y", Direction::InOut), arg("x", Direction::In)],
                vec![Scalar::i32(n as i32), Scalar::F32(rng.gen_range(-1.0..1.0))],
                reps,
            ),
            4 => kernel(
                "memcopy",
                vec![arg("m", Direction::Out), arg(["v", "y"].choose(rng).unwrap(), Direction::In)],
                vec![],
                1,
            ),
            5 => kernel(
                "path_dp",
                vec![arg("w", Direction::In), arg("r", Direction::Out)],
                vec![Scalar::i32(rows as i32), Scalar::i32(cols as i32)],
                1,
            ),
            6 => kernel("noop", vec![], vec![], reps),
            7 => download(finals.choose(rng).unwrap()),
            _ => {
                if rng.gen_bool(0.5) {
                    Step::Barrier
                } else {
                    upload(["x", "w"].choose(rng).unwrap())
                }
            }
        };
        count += step.task_count();
        steps.push(step);
    }
    steps.extend(finals.iter().map(|b| download(b)));
    instance(name, priority, queues, buffers, steps)
}

/// All workload files shipped under `workloads/`, by file stem.
pub fn shipped_workloads() -> Vec<(String, WorkloadSpec)> {
    let mut out = vec![
        ("launch_overhead".to_string(), launch_overhead(10_000)),
        ("transfer_sweep".to_string(), transfer_sweep(64 << 20)),
        ("sharing_2x".to_string(), sharing(2, 128, 3, 0.25)),
        ("sharing_4x".to_string(), sharing(4, 128, 3, 0.25)),
        ("elastic_priority".to_string(), ElasticSetup::default().both()),
        ("migration_stress".to_string(), random_workload(17, 2_000, 6)),
        ("hetero_elastic".to_string(), hetero_workload()),
    ];
    out.extend(crate::analogs::analogs().into_iter().map(|w| (w.name.clone(), w)));
    out
}
