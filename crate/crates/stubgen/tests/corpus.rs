use std::path::PathBuf;

use stubgen::{apply_annotations, generate_stubs, merge_annotations, parse_api, AddressSpace, AnnotationFile, Templates};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn corpus() -> (String, String) {
    let r = root().join("corpus");
    (
        std::fs::read_to_string(r.join("sample_api.h")).unwrap(),
        std::fs::read_to_string(r.join("sample_api.ann")).unwrap(),
    )
}

#[test]
fn sample_header_is_mostly_complete_without_annotations() {
    let (header, _) = corpus();
    let (spec, unresolved) = parse_api(&header).unwrap();
    assert_eq!(spec.functions.len(), 200);
    assert_eq!(spec.complete_count(), 200 - unresolved.len());
    let share = spec.complete_count() as f64 / 200.0;
    assert!(share >= 0.85, "only {:.1}% complete", share * 100.0);
    assert!(unresolved.iter().any(|f| f == "memcopy"));
}

#[test]
fn annotations_complete_the_sample_header() {
    let (header, ann) = corpus();
    let (spec, unresolved) = parse_api(&header).unwrap();
    let ann = AnnotationFile::parse(&ann).unwrap();
    // every incomplete function has a block, and nothing else does
    let blocks: Vec<&String> = ann.functions.keys().collect();
    let mut want: Vec<&String> = unresolved.iter().collect();
    want.sort();
    assert_eq!(blocks, want);
    let merged = merge_annotations(&spec, &ann).unwrap();
    assert!(merged.is_complete());
    let copy = merged.function("memcopy").unwrap();
    assert_eq!(copy.params[0].space, Some(AddressSpace::Host));
    assert_eq!(copy.params[0].size.as_ref().unwrap().to_string(), "n");
}

#[test]
fn kernel_backed_entries_carry_the_kernel_layouts() {
    let (header, _) = corpus();
    let (spec, _) = parse_api(&header).unwrap();
    let bytes = |f: &str, p: &str, vals: &[(&str, u64)]| {
        let e = spec.function(f).unwrap().param(p).unwrap().size.clone().unwrap();
        e.eval(&|v| vals.iter().find(|(k, _)| *k == v).map(|(_, x)| *x)).unwrap()
    };
    assert_eq!(bytes("vec_increment", "data", &[("n", 10)]), 40);
    assert_eq!(bytes("saxpy", "y", &[("n", 10)]), 40);
    assert_eq!(bytes("gaussian_step", "a", &[("n", 10)]), 400);
    assert_eq!(bytes("gaussian_step", "b", &[("n", 10)]), 40);
    assert_eq!(bytes("grid_relax", "grid", &[("nx", 2), ("ny", 3), ("nz", 4)]), 96);
    assert_eq!(bytes("path_dp", "wall", &[("rows", 3), ("cols", 5)]), 60);
    assert_eq!(bytes("path_dp", "result", &[("rows", 3), ("cols", 5)]), 20);
}

#[test]
fn generation_is_deterministic_and_covers_every_function() {
    let (header, ann) = corpus();
    let (spec, _) = parse_api(&header).unwrap();
    let spec = merge_annotations(&spec, &AnnotationFile::parse(&ann).unwrap()).unwrap();
    let t = Templates::load(root().join("templates/rust")).unwrap();
    let a = generate_stubs(&spec, &t).unwrap();
    let b = generate_stubs(&spec, &t).unwrap();
    assert_eq!(a.client, b.client);
    assert_eq!(a.server, b.server);
    assert_eq!(a.client.matches("\npub fn ").count(), 200);
    assert_eq!(a.server.matches("match lookup(").count(), 200);
    // reparsing the spec's own JSON changes nothing
    let again = stubgen::ApiSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(generate_stubs(&again, &t).unwrap().client, a.client);
}

#[test]
fn partial_annotation_is_monotone_over_the_corpus() {
    let (header, ann) = corpus();
    let (spec, _) = parse_api(&header).unwrap();
    let full = AnnotationFile::parse(&ann).unwrap();
    let mut prev = spec.complete_count();
    let mut partial = AnnotationFile::default();
    for (f, params) in &full.functions {
        partial.functions.insert(f.clone(), params.clone());
        let merged = apply_annotations(&spec, &partial).unwrap();
        assert!(merged.complete_count() > prev, "{f}");
        prev = merged.complete_count();
    }
    assert_eq!(prev, 200);
}
