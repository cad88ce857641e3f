//! Small stand-ins for common accelerator applications, combined into the
//! mixed workloads `mix_a` through `mix_p`.
//!
//! Each stand-in reproduces the shape of its namesake (transfer pattern,
//! kernel chain, relative run length) with bundled kernels, not its math.

use arax::Direction;

use crate::workload::{Arg, BufferSpec, Init, InstanceSpec, IntValue, Priority, Scalar, Step, WorkloadSpec};

fn b(name: &str, size: u64, init: Init) -> BufferSpec {
    BufferSpec {
        name: name.into(),
        size,
        init,
    }
}

fn a(buffer: &str, dir: Direction) -> Arg {
    Arg {
        buffer: buffer.into(),
        dir,
    }
}

fn k(name: &str, args: Vec<Arg>, scalars: Vec<Scalar>, repeat: u32) -> Step {
    Step::Kernel {
        kernel: name.into(),
        args,
        scalars,
        repeat,
    }
}

fn up(x: &str) -> Step {
    Step::Upload { buffer: x.into() }
}

fn down(x: &str) -> Step {
    Step::Download { buffer: x.into() }
}

fn inst(name: &str, queues: u32, buffers: Vec<BufferSpec>, steps: Vec<Step>) -> InstanceSpec {
    InstanceSpec {
        name: name.into(),
        priority: Priority::Low,
        queues,
        copies: 1,
        arrival_us: 0,
        buffers,
        steps,
    }
}

/// Batches of layer updates over a weight vector; digit classifier sized.
fn mnist() -> InstanceSpec {
    let n = 1 << 12;
    let mut steps = vec![up("w")];
    for _ in 0..8 {
        steps.push(up("x"));
        steps.push(k(
            "saxpy",
            vec![a("w", Direction::InOut), a("x", Direction::In)],
            vec![Scalar::i32(n), Scalar::F32(-0.01)],
            12,
        ));
    }
    steps.push(down("w"));
    inst("mnist", 1, vec![b("w", n as u64 * 4, Init::RandomF32), b("x", n as u64 * 4, Init::RandomF32)], steps)
}

/// Same shape as `mnist` with wider layers and more batches.
fn cifar() -> InstanceSpec {
    let n = 1 << 15;
    let mut steps = vec![up("w")];
    for _ in 0..12 {
        steps.push(up("x"));
        steps.push(k(
            "saxpy",
            vec![a("w", Direction::InOut), a("x", Direction::In)],
            vec![Scalar::i32(n), Scalar::F32(-0.001)],
            16,
        ));
        steps.push(k("vec_increment", vec![a("c", Direction::InOut)], vec![], 1));
    }
    steps.push(down("w"));
    steps.push(down("c"));
    inst(
        "cifar",
        1,
        vec![
            b("w", n as u64 * 4, Init::RandomF32),
            b("x", n as u64 * 4, Init::RandomF32),
            b("c", 64, Init::Zero),
        ],
        steps,
    )
}

/// Two towers sharing weights: a two-queue instance.
fn siamese() -> InstanceSpec {
    let mut i = mnist();
    i.name = "siamese".into();
    i.queues = 2;
    i
}

fn gaussian() -> InstanceSpec {
    let n = 96;
    inst(
        "gaussian",
        1,
        vec![b("a", n * n * 4, Init::RandomF32), b("v", n * 4, Init::RandomF32)],
        vec![
            up("a"),
            up("v"),
            k(
                "gaussian_step",
                vec![a("a", Direction::InOut), a("v", Direction::InOut)],
                vec![Scalar::i32(n as i32), Scalar::I32(IntValue::Iter)],
                n as u32 - 1,
            ),
            down("v"),
        ],
    )
}

/// Particle interactions in a 3-D box.
fn lavamd() -> InstanceSpec {
    let (nx, ny, nz) = (24u64, 24, 24);
    inst(
        "lavamd",
        1,
        vec![b("box", nx * ny * nz * 4, Init::RandomF32)],
        vec![
            up("box"),
            k(
                "grid_relax",
                vec![a("box", Direction::InOut)],
                vec![Scalar::i32(nx as i32), Scalar::i32(ny as i32), Scalar::i32(nz as i32), Scalar::i32(4)],
                10,
            ),
            down("box"),
        ],
    )
}

/// Thermal simulation on a 2-D chip grid.
fn hotspot() -> InstanceSpec {
    let (nx, ny) = (128u64, 128);
    inst(
        "hotspot",
        1,
        vec![b("temp", nx * ny * 4, Init::RandomF32)],
        vec![
            up("temp"),
            k(
                "grid_relax",
                vec![a("temp", Direction::InOut)],
                vec![Scalar::i32(nx as i32), Scalar::i32(ny as i32), Scalar::i32(1), Scalar::i32(2)],
                25,
            ),
            down("temp"),
        ],
    )
}

/// Many short steps with host round trips; particle filter sized.
fn particle() -> InstanceSpec {
    let (rows, cols) = (16u64, 512u64);
    let mut steps = Vec::new();
    for _ in 0..10 {
        steps.push(up("field"));
        steps.push(k(
            "path_dp",
            vec![a("field", Direction::In), a("weight", Direction::Out)],
            vec![Scalar::i32(rows as i32), Scalar::i32(cols as i32)],
            1,
        ));
        steps.push(k(
            "memcopy",
            vec![a("resampled", Direction::Out), a("weight", Direction::In)],
            vec![],
            1,
        ));
        steps.push(down("resampled"));
    }
    inst(
        "particle",
        1,
        vec![
            b("field", rows * cols * 4, Init::RandomI32),
            b("weight", cols * 4, Init::Zero),
            b("resampled", cols * 4, Init::Zero),
        ],
        steps,
    )
}

/// The sixteen mixes: which stand-ins each one runs.
const MIXES: [&[&str]; 16] = [
    &["mnist", "cifar"],
    &["gaussian", "hotspot"],
    &["lavamd", "particle"],
    &["siamese", "gaussian"],
    &["mnist", "mnist", "hotspot"],
    &["cifar", "lavamd"],
    &["particle", "particle", "gaussian"],
    &["siamese", "hotspot", "mnist"],
    &["gaussian", "gaussian", "gaussian"],
    &["cifar", "particle", "hotspot"],
    &["lavamd", "lavamd"],
    &["mnist", "siamese", "particle", "gaussian"],
    &["hotspot", "hotspot", "cifar"],
    &["siamese", "lavamd", "particle"],
    &["mnist", "cifar", "gaussian", "hotspot"],
    &["siamese", "siamese", "lavamd", "particle"],
];

fn app(name: &str) -> InstanceSpec {
    match name {
        "mnist" => mnist(),
        "cifar" => cifar(),
        "siamese" => siamese(),
        "gaussian" => gaussian(),
        "lavamd" => lavamd(),
        "hotspot" => hotspot(),
        "particle" => particle(),
        _ => unreachable!("no stand-in named {name}"),
    }
}

pub fn analogs() -> Vec<WorkloadSpec> {
    MIXES
        .iter()
        .enumerate()
        .map(|(i, apps)| {
            let letter = (b'a' + i as u8) as char;
            let mut instances: Vec<InstanceSpec> = Vec::new();
            for (j, name) in apps.iter().enumerate() {
                let mut s = app(name);
                s.name = format!("{name}{j}");
                // later apps arrive staggered; the last one is interactive
                s.arrival_us = 500 * j as u64;
                if j + 1 == apps.len() && apps.len() > 2 {
                    s.priority = Priority::High;
                }
                instances.push(s);
            }
            WorkloadSpec {
                name: format!("mix_{letter}"),
                description: apps.join(" + "),
                seed: 100 + i as u64,
                occupancy: Default::default(),
                kernel_types: Default::default(),
                instances,
            }
        })
        .collect()
}
