use std::path::PathBuf;

use stubgen::{generate_stubs, merge_annotations, parse_api, AnnotationFile, Templates};

fn main() {
    let root = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap()).join("../stubgen");
    let header = root.join("corpus/sample_api.h");
    let ann = root.join("corpus/sample_api.ann");
    let templates = root.join("templates/rust");
    for p in [&header, &ann, &templates] {
        println!("cargo:rerun-if-changed={}", p.display());
    }

    let (spec, _) = parse_api(&std::fs::read_to_string(&header).unwrap()).unwrap();
    let ann = AnnotationFile::parse(&std::fs::read_to_string(&ann).unwrap()).unwrap();
    let spec = merge_annotations(&spec, &ann).unwrap();
    let t = Templates::load(&templates).unwrap();
    let out = PathBuf::from(std::env::var("OUT_DIR").unwrap());
    generate_stubs(&spec, &t).unwrap().write_to(&out).unwrap();
}
