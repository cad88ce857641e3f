use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stubgen(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stubgen"));
    for a in args {
        c.arg(a);
    }
    c.output().unwrap()
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

#[test]
fn parse_merge_gen_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("api.json");
    let out = stubgen(&[&"parse", &corpus("sample_api.h"), &"-o", &spec]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("200 functions, 173 complete (86.5%)"), "{err}");
    assert_eq!(err.matches("needs annotation: ").count(), 27);

    // gen refuses an incomplete spec
    let gen_dir = dir.path().join("gen");
    let templates = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates/rust");
    let out = stubgen(&[&"gen", &spec, &"--templates", &templates, &"-o", &gen_dir]);
    assert!(!out.status.success());
    assert!(!gen_dir.join("client_stubs.rs").exists());

    let out = stubgen(&[&"merge", &spec, &corpus("sample_api.ann")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = stubgen(&[&"gen", &spec, &"--templates", &templates, &"-o", &gen_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(gen_dir.join("client_stubs.rs")).unwrap();
    assert!(gen_dir.join("server_dispatch.rs").exists());

    let out = stubgen(&[&"gen", &spec, &"--templates", &templates, &"-o", &gen_dir]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(gen_dir.join("client_stubs.rs")).unwrap(), first);
}

#[test]
fn bad_inputs_exit_nonzero_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let header = dir.path().join("bad.h");
    std::fs::write(&header, "void ok(int n);\nvoid f(int** pp);\n").unwrap();
    let out = stubgen(&[&"parse", &header, &"-o", &dir.path().join("s.json")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:"));

    std::fs::write(&header, "void copy(void* dst, const void* src, size_t n);\n").unwrap();
    let spec = dir.path().join("s.json");
    assert!(stubgen(&[&"parse", &header, &"-o", &spec]).status.success());
    let ann = dir.path().join("a.ann");
    std::fs::write(&ann, "copy:\n  dst: size: m, space: host\n").unwrap();
    let out = stubgen(&[&"merge", &spec, &ann]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"m\""));
    // failed merge leaves the spec untouched
    assert!(std::fs::read_to_string(&spec).unwrap().contains("\"size\": null"));
}
