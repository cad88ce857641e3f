use arax::server::{ServerConfig, SharingMode};
use arax::Direction;
use bench::scenario::{self, random_workload, virtual_config};
use bench::workload::IntValue;
use bench::{
    buffer_stream, initial_contents, run_workload, run_workload_with, RunOptions, Scalar, Step, WorkloadSpec,
};
use proptest::prelude::*;

/// Host model of one queue's program: device copies start zeroed, uploads
/// copy the initial host data, kernels act on device copies.
fn model_outputs(w: &WorkloadSpec) -> Vec<(String, u32, String, Vec<u8>)> {
    let mut out = Vec::new();
    for (idx, inst) in w.expanded().iter().enumerate() {
        for q in 0..inst.queues {
            let host: Vec<Vec<u8>> = inst
                .buffers
                .iter()
                .enumerate()
                .map(|(b, s)| initial_contents(s.init, s.size, w.seed, buffer_stream(idx, q, b)))
                .collect();
            let mut dev: Vec<Vec<u8>> = inst.buffers.iter().map(|b| vec![0; b.size as usize]).collect();
            let find = |n: &str| inst.buffers.iter().position(|b| b.name == n).unwrap();
            for step in &inst.steps {
                match step {
                    Step::Upload { buffer } => {
                        let b = find(buffer);
                        dev[b] = host[b].clone();
                    }
                    Step::Download { buffer } => {
                        out.push((inst.name.clone(), q, buffer.clone(), dev[find(buffer)].clone()));
                    }
                    Step::Kernel {
                        kernel,
                        args,
                        scalars,
                        repeat,
                    } => {
                        let ids: Vec<usize> = args.iter().map(|a| find(&a.buffer)).collect();
                        for _ in 0..*repeat {
                            apply(kernel, &ids, scalars, &mut dev);
                        }
                    }
                    Step::Barrier | Step::TransferProbe { .. } => {}
                }
            }
        }
    }
    out
}

fn lit(s: &Scalar) -> i64 {
    match s {
        Scalar::I32(IntValue::Lit(v)) => *v as u32 as i32 as i64,
        Scalar::U64(IntValue::Lit(v)) => *v as i64,
        other => panic!("model has no value for {other:?}"),
    }
}

fn words(b: &[u8]) -> Vec<i32> {
    b.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()
}

fn apply(kernel: &str, ids: &[usize], scalars: &[Scalar], dev: &mut [Vec<u8>]) {
    match kernel {
        "noop" => {}
        "vec_increment" => {
            let n = (lit(&scalars[0]) as usize).min(dev[ids[0]].len() / 4);
            for i in 0..n {
                let v = i32::from_le_bytes(dev[ids[0]][i * 4..i * 4 + 4].try_into().unwrap());
                dev[ids[0]][i * 4..i * 4 + 4].copy_from_slice(&(v.wrapping_add(1)).to_le_bytes());
            }
        }
        "saxpy" => {
            let n = lit(&scalars[0]) as usize;
            let Scalar::F32(alpha) = scalars[1] else { panic!() };
            for i in 0..n {
                let x = f32::from_le_bytes(dev[ids[1]][i * 4..i * 4 + 4].try_into().unwrap());
                let y = f32::from_le_bytes(dev[ids[0]][i * 4..i * 4 + 4].try_into().unwrap());
                dev[ids[0]][i * 4..i * 4 + 4].copy_from_slice(&(y + alpha * x).to_le_bytes());
            }
        }
        "memcopy" => {
            let n = dev[ids[0]].len().min(dev[ids[1]].len());
            let src = dev[ids[1]][..n].to_vec();
            dev[ids[0]][..n].copy_from_slice(&src);
        }
        "path_dp" => {
            let (rows, cols) = (lit(&scalars[0]) as usize, lit(&scalars[1]) as usize);
            let wall = words(&dev[ids[0]]);
            // cost[r][c]: cheapest top-to-(r, c) path moving down or diagonally
            let mut cost = vec![vec![0i32; cols]; rows];
            for r in 0..rows {
                for c in 0..cols {
                    let here = wall[r * cols + c];
                    cost[r][c] = if r == 0 {
                        here
                    } else {
                        let lo = c.saturating_sub(1);
                        let hi = (c + 1).min(cols - 1);
                        here.wrapping_add((lo..=hi).map(|k| cost[r - 1][k]).min().unwrap())
                    };
                }
            }
            for (c, v) in cost[rows - 1].iter().enumerate() {
                dev[ids[1]][c * 4..c * 4 + 4].copy_from_slice(&v.to_le_bytes());
            }
        }
        other => panic!("no model for {other}"),
    }
}

fn outputs(w: &WorkloadSpec, cfg: &ServerConfig) -> Vec<(String, u32, String, Vec<u8>)> {
    run_workload(w, cfg)
        .unwrap()
        .outputs
        .into_iter()
        .map(|o| (o.instance, o.queue, o.buffer, o.bytes))
        .collect()
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

#[test]
fn empty_workload_has_zero_makespan() {
    let w = WorkloadSpec::from_toml("name = \"empty\"\n").unwrap();
    let r = run_workload(&w, &virtual_config(1)).unwrap();
    assert_eq!(r.metrics.makespan_ns, 0);
    assert_eq!(r.metrics.tasks, 0);
    assert!(r.metrics.instances.is_empty());
    assert!(r.outputs.is_empty());
}

#[test]
fn single_instance_turnaround_is_makespan() {
    let w = scenario::sharing(1, 32, 2, 0.25);
    let r = run_workload(&w, &virtual_config(2)).unwrap();
    let m = &r.metrics;
    assert_eq!(m.instances.len(), 1);
    assert_eq!(m.instances[0].turnaround_ns(), m.makespan_ns);
    assert!(m.makespan_ns > 0);
    assert_eq!(m.tasks, w.total_tasks());
}

#[test]
fn virtual_runs_are_reproducible() {
    let w = random_workload(5, 600, 4);
    let a = run_workload(&w, &virtual_config(3)).unwrap();
    let b = run_workload(&w, &virtual_config(3)).unwrap();
    assert_eq!(a.metrics.without_wall_clock(), b.metrics.without_wall_clock());
    assert_eq!(a.outputs, b.outputs);
}

#[test]
fn outputs_match_host_model() {
    for seed in 0..6 {
        let w = random_workload(seed, 400, 5);
        assert_eq!(
            sorted(outputs(&w, &virtual_config(2))),
            sorted(model_outputs(&w)),
            "seed {seed}"
        );
    }
}

#[test]
fn real_clock_outputs_match_host_model() {
    let w = random_workload(9, 300, 3);
    let mut cfg = scenario::real_config(2);
    cfg.mode = SharingMode::Shared;
    assert_eq!(sorted(outputs(&w, &cfg)), sorted(model_outputs(&w)));
}

#[test]
fn failed_task_is_reported() {
    let mut w = scenario::launch_overhead(3);
    for name in ["y", "x"] {
        w.instances[0].buffers.push(bench::BufferSpec {
            name: name.into(),
            size: 16,
            init: bench::Init::Zero,
        });
    }
    // saxpy with n larger than the buffers fails on the device
    w.instances[0].steps.push(Step::Kernel {
        kernel: "saxpy".into(),
        args: vec!["y:inout".parse().unwrap(), "x:in".parse().unwrap()],
        scalars: vec![Scalar::i32(64), Scalar::F32(1.0)],
        repeat: 1,
    });
    match run_workload(&w, &virtual_config(1)) {
        Err(bench::RunError::TaskFailed { what, .. }) => assert_eq!(what, "saxpy"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_kernel_is_rejected_before_running() {
    let mut w = scenario::launch_overhead(1);
    if let Step::Kernel { kernel, .. } = &mut w.instances[0].steps[0] {
        *kernel = "warp_drive".into();
    }
    assert!(matches!(
        run_workload(&w, &virtual_config(1)),
        Err(bench::RunError::Workload(bench::WorkloadError::UnknownKernel { .. }))
    ));
}

#[test]
fn workload_kernel_restrictions_apply() {
    let w = scenario::hetero_workload();
    let mut launches = Vec::new();
    run_workload_with(&w, &scenario::hetero_config(), RunOptions::default(), &mut |e| {
        launches = e.devices().iter().map(|d| d.launches()).collect();
    })
    .unwrap();
    // path_dp may only run on the cpu, saxpy only on the accelerators
    assert_eq!(launches[0], 2 * 200);
    assert_eq!(launches[1] + launches[2], 400);
}

#[test]
fn unknown_scenario_is_an_error() {
    assert!(scenario::scenario("nope").is_err());
    for name in scenario::SCENARIOS {
        let s = scenario::scenario(name).unwrap();
        assert!(!s.variants.is_empty());
    }
}

#[test]
fn shipped_workloads_match_builders() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("workloads");
    let shipped = scenario::shipped_workloads();
    let on_disk = std::fs::read_dir(&dir).unwrap().count();
    assert_eq!(on_disk, shipped.len());
    let table = virtual_config(1).dispatch_table();
    for (stem, w) in shipped {
        let loaded = WorkloadSpec::load(dir.join(format!("{stem}.toml"))).unwrap();
        assert_eq!(loaded, w, "{stem}");
        loaded.validate(&|k| table.is_known(k)).unwrap();
    }
}

#[test]
fn mixed_workloads_run() {
    for w in bench::analogs::analogs().iter().step_by(5) {
        let r = run_workload(w, &virtual_config(2)).unwrap();
        assert_eq!(r.metrics.tasks, w.total_tasks(), "{}", w.name);
        assert_eq!(r.order_violations, 0);
    }
}

#[test]
fn shipped_configs_match_builders() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let load = |f: &str| format!("{:?}", ServerConfig::load(dir.join(f)).unwrap());
    let mut ts = virtual_config(1);
    ts.mode = SharingMode::Timeslice;
    assert_eq!(load("one_gpu.toml"), format!("{:?}", virtual_config(1)));
    assert_eq!(load("one_gpu_timeslice.toml"), format!("{ts:?}"));
    assert_eq!(load("two_gpu_elastic.toml"), format!("{:?}", scenario::elastic_config(2)));
    assert_eq!(load("four_gpu.toml"), format!("{:?}", virtual_config(4)));
    assert_eq!(load("hetero.toml"), format!("{:?}", scenario::hetero_config()));
    assert_eq!(load("real_one_gpu.toml"), format!("{:?}", scenario::real_config(1)));
}

#[test]
fn direction_names_round_trip() {
    for d in [Direction::In, Direction::Out, Direction::InOut] {
        let a = bench::workload::Arg {
            buffer: "b".into(),
            dir: d,
        };
        assert_eq!(a.to_string().parse::<bench::workload::Arg>().unwrap(), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // busy time is occupancy-weighted, so no device can be busier than the
    // run is long; and every kernel task launches exactly once
    #[test]
    fn device_accounting_closes(seed in 0u64..10_000, devices in 1usize..4) {
        let w = random_workload(seed, 300, 4);
        let mut launches = 0;
        let r = run_workload_with(&w, &virtual_config(devices), RunOptions::default(), &mut |e| {
            launches = e.devices().iter().map(|d| d.launches()).sum::<u64>();
        }).unwrap();
        let m = &r.metrics;
        let kernels: u64 = w.expanded().iter().map(|i| {
            u64::from(i.queues) * i.steps.iter().map(|s| match s {
                Step::Kernel { repeat, .. } => u64::from(*repeat),
                _ => 0,
            }).sum::<u64>()
        }).sum();
        prop_assert_eq!(launches, kernels);
        prop_assert_eq!(m.device_busy_ns.len(), devices);
        let span = m.instances.iter().map(|i| i.end_ns).max().unwrap();
        for b in &m.device_busy_ns {
            prop_assert!(*b <= span);
        }
        prop_assert!(m.device_busy_ns.iter().sum::<u64>() <= devices as u64 * span);
        prop_assert_eq!(r.order_violations, 0);
    }
}
