use std::process::Command;

use bench::{from_csv, WorkloadSpec};

fn bench_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arax-bench"))
}

fn manifest(p: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(p)
}

#[test]
fn run_writes_parseable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mix.csv");
    let st = bench_bin()
        .args(["run"])
        .arg(manifest("workloads/mix_b.toml"))
        .arg("--server-config")
        .arg(manifest("configs/two_gpu_elastic.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let m = from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m.instances.len(), 2);
    assert_eq!(m.clock, "virtual");
    assert!(m.makespan_ns > 0);
    let w = WorkloadSpec::load(manifest("workloads/mix_b.toml")).unwrap();
    assert_eq!(m.tasks, w.total_tasks());
}

#[test]
fn mode_and_seed_overrides_apply() {
    let out = bench_bin()
        .args(["run", "--mode", "timeslice", "--seed", "5"])
        .arg(manifest("workloads/sharing_2x.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let m = from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(m.mode, "timeslice");
}

#[test]
fn export_reproduces_shipped_workloads() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bench_bin().arg("export").arg(dir.path()).status().unwrap().success());
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let p = entry.unwrap().path();
        let shipped = manifest("workloads").join(p.file_name().unwrap());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), std::fs::read_to_string(shipped).unwrap());
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = bench_bin().args(["scenario", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));
    let out = bench_bin().args(["run", "/no/such/file.toml"]).output().unwrap();
    assert!(!out.status.success());
    let list = bench_bin().arg("list").output().unwrap();
    assert_eq!(String::from_utf8(list.stdout).unwrap().lines().count(), bench::SCENARIOS.len());
}
