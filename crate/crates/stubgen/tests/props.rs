//! Randomized checks of header resolution against a model of the rules
//! written independently here.

use proptest::prelude::*;
use stubgen::{apply_annotations, parse_api, AddressSpace, AnnotationFile, Direction};

const TYPES: [(&str, u64, bool); 7] = [
    ("int", 4, true),
    ("unsigned int", 4, true),
    ("size_t", 8, true),
    ("long", 8, true),
    ("float", 4, false),
    ("double", 8, false),
    ("unsigned char", 1, true),
];

const NAMES: [&str; 16] = [
    "data", "buf", "x", "y", "n", "len", "count", "num", "k", "data_len", "n_buf", "num_x", "x_count",
    "y_size", "width", "nelem",
];

#[derive(Clone, Debug)]
struct P {
    name: &'static str,
    ty: Option<usize>, // None = void
    pointer: bool,
    is_const: bool,
    bound: Option<u64>,
}

fn param() -> impl Strategy<Value = P> {
    (0..NAMES.len(), prop::option::weighted(0.9, 0..TYPES.len()), any::<bool>(), any::<bool>(), prop::option::weighted(0.15, 1u64..9))
        .prop_map(|(n, ty, pointer, is_const, bound)| {
            let pointer = pointer || ty.is_none();
            P {
                name: NAMES[n],
                ty,
                pointer,
                is_const: is_const && pointer,
                bound: bound.filter(|_| pointer && ty.is_some()),
            }
        })
}

fn params() -> impl Strategy<Value = Vec<P>> {
    prop::collection::vec(param(), 0..7).prop_map(|mut v| {
        let mut seen = Vec::new();
        v.retain(|p| {
            let fresh = !seen.contains(&p.name);
            seen.push(p.name);
            fresh
        });
        v
    })
}

fn render(ps: &[P]) -> String {
    let list: Vec<String> = ps
        .iter()
        .map(|p| {
            let base = p.ty.map_or("void", |t| TYPES[t].0);
            let c = if p.is_const { "const " } else { "" };
            match (p.pointer, p.bound) {
                (true, Some(b)) => format!("{c}{base} {}[{b}]", p.name),
                (true, None) => format!("{c}{base}* {}", p.name),
                _ => format!("{base} {}", p.name),
            }
        })
        .collect();
    let list = if list.is_empty() { "void".to_string() } else { list.join(", ") };
    format!("/* generated */\nvoid f({list});\n")
}

/// Expected byte size under concrete scalar values, or None if unresolved.
fn model_size(ps: &[P], p: &P, value: &dyn Fn(&str) -> u64) -> Option<u64> {
    let (_, width, _) = TYPES[p.ty?];
    if let Some(b) = p.bound {
        return Some(b * width);
    }
    let is_int = |name: &str| ps.iter().any(|q| q.name == name && !q.pointer && q.ty.is_some_and(|t| TYPES[t].2));
    for cand in [
        format!("{}_len", p.name),
        format!("{}_count", p.name),
        format!("{}_size", p.name),
        format!("n_{}", p.name),
        format!("num_{}", p.name),
    ] {
        if is_int(&cand) {
            return Some(value(&cand) * width);
        }
    }
    let generic: Vec<&str> = ["n", "len", "count", "num", "length", "nelem"]
        .into_iter()
        .filter(|g| is_int(g))
        .collect();
    (generic.len() == 1).then(|| value(generic[0]) * width)
}

fn value_of(name: &str) -> u64 {
    name.bytes().map(u64::from).sum::<u64>() % 97 + 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn resolution_follows_the_rules(ps in params()) {
        let (spec, unresolved) = parse_api(&render(&ps)).unwrap();
        let f = &spec.functions[0];
        prop_assert_eq!(f.params.len(), ps.len());
        for (got, p) in f.params.iter().zip(&ps) {
            prop_assert_eq!(&got.name, p.name);
            prop_assert_eq!(got.pointer, p.pointer);
            if !p.pointer {
                prop_assert_eq!(got.direction, Direction::In);
                prop_assert_eq!(got.space, Some(AddressSpace::Scalar));
                let w = TYPES[p.ty.unwrap()].1;
                prop_assert_eq!(got.size.as_ref().and_then(|e| e.eval(&|_| None)), Some(w));
                continue;
            }
            let dir = if p.is_const { Direction::In } else { Direction::InOut };
            prop_assert_eq!(got.direction, dir);
            prop_assert_eq!(got.space, p.ty.map(|_| AddressSpace::Host));
            let want = model_size(&ps, p, &value_of);
            let have = got.size.as_ref().map(|e| e.eval(&|v| Some(value_of(v))).unwrap());
            prop_assert_eq!(have, want, "{}", p.name);
        }
        prop_assert_eq!(unresolved.is_empty(), f.is_complete());
    }

    #[test]
    fn signature_round_trips(ps in params()) {
        let (spec, _) = parse_api(&render(&ps)).unwrap();
        let f = &spec.functions[0];
        let bounded = ps.iter().any(|p| p.bound.is_some());
        let (again, _) = parse_api(&f.signature()).unwrap();
        let g = &again.functions[0];
        prop_assert_eq!(&g.name, &f.name);
        for (a, b) in g.params.iter().zip(&f.params) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.base_type, &b.base_type);
            prop_assert_eq!(a.pointer, b.pointer);
            prop_assert_eq!(a.is_const, b.is_const);
            prop_assert_eq!(a.direction, b.direction);
            prop_assert_eq!(a.space, b.space);
        }
        if !bounded {
            prop_assert_eq!(g, f);
        }
    }

    #[test]
    fn annotation_never_unresolves(ps in params(), pick in prop::collection::vec(any::<bool>(), 7)) {
        let (spec, _) = parse_api(&render(&ps)).unwrap();
        let f = &spec.functions[0];
        let scalar = f.scalar_names().next();
        let mut text = String::from("f:\n");
        for (p, &take) in f.params.iter().zip(&pick) {
            if !take || !p.pointer || p.is_resolved() {
                continue;
            }
            let size = match (&p.size, scalar) {
                (None, Some(s)) => format!("size: {s} * 2, "),
                (None, None) => "size: 16, ".to_string(),
                _ => String::new(),
            };
            let space = if p.space.is_none() { "space: device" } else { "" };
            text.push_str(&format!("  {}: {}{}\n", p.name, size, space).replace(", \n", "\n"));
        }
        let ann = AnnotationFile::parse(&text).unwrap();
        let merged = apply_annotations(&spec, &ann).unwrap();
        let g = &merged.functions[0];
        prop_assert!(g.unresolved().len() <= f.unresolved().len());
        for (a, b) in g.params.iter().zip(&f.params) {
            if b.size.is_some() {
                prop_assert_eq!(&a.size, &b.size);
            }
            if b.space.is_some() {
                prop_assert_eq!(a.space, b.space);
            }
        }
    }
}
