//! Stub generation from a template directory.
//!
//! The directory holds one file per fragment (`<fragment>.tmpl`) plus
//! `types.map`, which maps C base types to target types (`int = i32`) and
//! names the output extension (`@ext = rs`). Fragments use `{{var}}`
//! placeholders; an unknown placeholder is an error so a typo in a
//! template never silently produces broken output.
//!
//! | fragment          | variables                                        |
//! |-------------------|--------------------------------------------------|
//! | `client_file`     | `functions`, `count`                             |
//! | `client_fn`       | `name`, `signature`, `return_type`, `params`, `prologue`, `scalars`, `args`, `epilogue` |
//! | `param_scalar`    | `pname`, `ptype`                                 |
//! | `param_host_in`   | `pname`, `ptype`                                 |
//! | `param_host_out`  | `pname`, `ptype` (out and inout)                 |
//! | `param_device`    | `pname`, `ptype`                                 |
//! | `size_var`        | `pname`, `ptype`                                 |
//! | `alloc_host`      | `pname`, `ptype`, `size`                         |
//! | `sync_to`         | `pname`, `ptype`                                 |
//! | `sync_from`       | `pname`, `ptype`                                 |
//! | `scalar`          | `pname`, `ptype`                                 |
//! | `arg_host`        | `pname`, `dir`, `Dir`                            |
//! | `arg_device`      | `pname`, `dir`, `Dir`                            |
//! | `server_file`     | `entries`, `registrations`, `count`              |
//! | `server_entry`    | `name`, `index`                                  |
//! | `server_register` | `name`, `index`                                  |

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::spec::{AddressSpace, ApiSpec, Direction, FunctionSpec, ParamSpec};

pub const FRAGMENTS: [&str; 16] = [
    "client_file",
    "client_fn",
    "param_scalar",
    "param_host_in",
    "param_host_out",
    "param_device",
    "size_var",
    "alloc_host",
    "sync_to",
    "sync_from",
    "scalar",
    "arg_host",
    "arg_device",
    "server_file",
    "server_entry",
    "server_register",
];

#[derive(Debug, Error)]
pub enum GenError {
    #[error("spec is not complete: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("template {0} is missing")]
    MissingTemplate(String),
    #[error("template {template}: unknown variable {var}")]
    UnknownVar { template: String, var: String },
    #[error("template {0}: unclosed placeholder")]
    Unclosed(String),
    #[error("types.map line {line}: {msg}")]
    TypeMap { line: usize, msg: String },
    #[error("{function}: no target type for {ty:?}")]
    UnmappedType { function: String, ty: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug)]
pub struct Templates {
    fragments: BTreeMap<String, String>,
    types: BTreeMap<String, String>,
    ext: String,
}

fn read(path: &Path) -> Result<String, GenError> {
    std::fs::read_to_string(path).map_err(|source| GenError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Templates {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, GenError> {
        let dir = dir.as_ref();
        let mut fragments = BTreeMap::new();
        for f in FRAGMENTS {
            let path = dir.join(format!("{f}.tmpl"));
            if !path.exists() {
                return Err(GenError::MissingTemplate(f.to_string()));
            }
            fragments.insert(f.to_string(), read(&path)?);
        }
        Self::from_parts(fragments, &read(&dir.join("types.map"))?)
    }

    pub fn from_parts(fragments: BTreeMap<String, String>, types_map: &str) -> Result<Self, GenError> {
        if let Some(f) = FRAGMENTS.iter().find(|f| !fragments.contains_key(**f)) {
            return Err(GenError::MissingTemplate(f.to_string()));
        }
        let mut types = BTreeMap::new();
        let mut ext = None;
        for (k, raw) in types_map.lines().enumerate() {
            let l = raw.split('#').next().unwrap().trim();
            if l.is_empty() {
                continue;
            }
            let (c, t) = l.split_once('=').ok_or(GenError::TypeMap {
                line: k + 1,
                msg: "expected `c type = target`".into(),
            })?;
            let (c, t) = (c.split_whitespace().collect::<Vec<_>>().join(" "), t.trim().to_string());
            if c == "@ext" {
                ext = Some(t);
            } else {
                types.insert(c, t);
            }
        }
        Ok(Templates {
            fragments,
            types,
            ext: ext.unwrap_or_else(|| "txt".into()),
        })
    }

    pub fn ext(&self) -> &str {
        &self.ext
    }

    fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, GenError> {
        let t = &self.fragments[name];
        let mut out = String::with_capacity(t.len() + 64);
        let mut rest = t.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or_else(|| GenError::Unclosed(name.to_string()))?;
            let var = after[..close].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == var)
                .ok_or_else(|| GenError::UnknownVar {
                    template: name.to_string(),
                    var: var.to_string(),
                })?
                .1;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn target_type(&self, f: &FunctionSpec, p: &ParamSpec) -> Result<&str, GenError> {
        self.types
            .get(&p.base_type)
            .map(String::as_str)
            .ok_or_else(|| GenError::UnmappedType {
                function: f.name.clone(),
                ty: p.base_type.clone(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedArtifacts {
    pub client: String,
    pub server: String,
    pub ext: String,
}

impl GeneratedArtifacts {
    pub fn client_file_name(&self) -> String {
        format!("client_stubs.{}", self.ext)
    }

    pub fn server_file_name(&self) -> String {
        format!("server_dispatch.{}", self.ext)
    }

    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), GenError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| GenError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, text) in [
            (self.client_file_name(), &self.client),
            (self.server_file_name(), &self.server),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io(&path))?;
        }
        Ok(())
    }
}

fn dir_names(d: Direction) -> (&'static str, &'static str) {
    match d {
        Direction::In => ("in", "In"),
        Direction::Out => ("out", "Out"),
        Direction::InOut => ("inout", "InOut"),
    }
}

fn client_fn(t: &Templates, f: &FunctionSpec) -> Result<String, GenError> {
    let (mut params, mut prologue, mut scalars, mut args, mut epilogue) =
        (String::new(), String::new(), String::new(), String::new(), String::new());
    let mut size_vars: BTreeMap<&str, String> = BTreeMap::new();
    for p in f.params.iter().filter(|p| p.is_scalar()) {
        let ty = t.target_type(f, p)?;
        size_vars.insert(&p.name, t.render("size_var", &[("pname", &p.name), ("ptype", ty)])?);
    }
    for p in &f.params {
        let ty = t.target_type(f, p)?;
        let base = [("pname", p.name.as_str()), ("ptype", ty)];
        let (dir, dir_cap) = dir_names(p.direction);
        let arg_vars = [("pname", p.name.as_str()), ("dir", dir), ("Dir", dir_cap)];
        match p.space.expect("complete spec") {
            AddressSpace::Scalar => {
                params += &t.render("param_scalar", &base)?;
                scalars += &t.render("scalar", &base)?;
            }
            AddressSpace::Device => {
                params += &t.render("param_device", &base)?;
                args += &t.render("arg_device", &arg_vars)?;
            }
            AddressSpace::Host => {
                let frag = if p.direction == Direction::In {
                    "param_host_in"
                } else {
                    "param_host_out"
                };
                params += &t.render(frag, &base)?;
                let size = p
                    .size
                    .as_ref()
                    .expect("complete spec")
                    .render(&|v| size_vars[v].clone());
                prologue += &t.render(
                    "alloc_host",
                    &[("pname", p.name.as_str()), ("ptype", ty), ("size", &size)],
                )?;
                if p.direction.reads() {
                    prologue += &t.render("sync_to", &base)?;
                }
                if p.direction.writes() {
                    epilogue += &t.render("sync_from", &base)?;
                }
                args += &t.render("arg_host", &arg_vars)?;
            }
        }
    }
    let signature = f.signature();
    t.render(
        "client_fn",
        &[
            ("name", &f.name),
            ("signature", &signature),
            ("return_type", &f.return_type),
            ("params", &params),
            ("prologue", &prologue),
            ("scalars", &scalars),
            ("args", &args),
            ("epilogue", &epilogue),
        ],
    )
}

/// Renders client stubs and server registrations for a Complete spec.
/// Output depends only on the spec and templates.
pub fn generate_stubs(spec: &ApiSpec, t: &Templates) -> Result<GeneratedArtifacts, GenError> {
    let left = spec.unresolved();
    if !left.is_empty() {
        return Err(GenError::Incomplete(left));
    }
    let mut functions = String::new();
    let mut entries = String::new();
    let mut registrations = String::new();
    for (i, f) in spec.functions.iter().enumerate() {
        functions += &client_fn(t, f)?;
        let index = i.to_string();
        let vars = [("name", f.name.as_str()), ("index", index.as_str())];
        entries += &t.render("server_entry", &vars)?;
        registrations += &t.render("server_register", &vars)?;
    }
    let count = spec.functions.len().to_string();
    Ok(GeneratedArtifacts {
        client: t.render("client_file", &[("functions", &functions), ("count", &count)])?,
        server: t.render(
            "server_file",
            &[("entries", &entries), ("registrations", &registrations), ("count", &count)],
        )?,
        ext: t.ext.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_api;

    /// A tiny template set that spells out the structure.
    fn plain() -> Templates {
        let mut m = BTreeMap::new();
        let frags = [
            ("client_file", "{{count}}\n{{functions}}"),
            ("client_fn", "fn {{name}}({{params}}) [{{prologue}}|{{scalars}}|{{args}}|{{epilogue}}]\n"),
            ("param_scalar", "{{pname}}:{{ptype}};"),
            ("param_host_in", "{{pname}}:&{{ptype}};"),
            ("param_host_out", "{{pname}}:&mut {{ptype}};"),
            ("param_device", "{{pname}}:dev;"),
            ("size_var", "{{pname}}"),
            ("alloc_host", "alloc {{pname}} {{size}};"),
            ("sync_to", "to {{pname}};"),
            ("sync_from", "from {{pname}};"),
            ("scalar", "put {{pname}};"),
            ("arg_host", "arg {{pname}} {{dir}};"),
            ("arg_device", "darg {{pname}} {{Dir}};"),
            ("server_file", "{{count}}:{{entries}}{{registrations}}"),
            ("server_entry", "{{name}},"),
            ("server_register", "reg {{index}} {{name}};"),
        ];
        for (k, v) in frags {
            m.insert(k.to_string(), v.to_string());
        }
        Templates::from_parts(m, "int = i32\nsize_t = u64\nvoid = u8\nfloat = f32\n@ext = txt").unwrap()
    }

    #[test]
    fn add_marshals_two_scalars() {
        let (spec, _) = parse_api("int add(int a, int b);").unwrap();
        let out = generate_stubs(&spec, &plain()).unwrap();
        assert_eq!(out.client, "1\nfn add(a:i32;b:i32;) [|put a;put b;||]\n");
        assert_eq!(out.server, "1:add,reg 0 add;");
    }

    #[test]
    fn host_pointers_get_buffers_and_syncs() {
        let (spec, _) =
            parse_api("/// @param[out] dst\n/// @size dst n\n/// @size src n\nvoid copy(void* dst, const void* src, size_t n);")
                .unwrap();
        assert!(!spec.is_complete());
        let ann = crate::annotate::AnnotationFile::parse("copy:\n  dst: space: host\n  src: space: host\n").unwrap();
        let spec = crate::annotate::merge_annotations(&spec, &ann).unwrap();
        let out = generate_stubs(&spec, &plain()).unwrap();
        assert_eq!(
            out.client,
            "1\nfn copy(dst:&mut u8;src:&u8;n:u64;) [alloc dst n;alloc src n;to src;|put n;|arg dst out;arg src in;|from dst;]\n"
        );
    }

    #[test]
    fn incomplete_specs_are_refused() {
        let (spec, _) = parse_api("void copy(void* dst, const void* src, size_t n);").unwrap();
        assert!(matches!(generate_stubs(&spec, &plain()), Err(GenError::Incomplete(v)) if v.len() == 2));
    }

    #[test]
    fn template_errors() {
        let (spec, _) = parse_api("int add(int a, int b);").unwrap();
        let mut t = plain();
        t.fragments.insert("scalar".into(), "{{nope}}".into());
        assert!(matches!(generate_stubs(&spec, &t), Err(GenError::UnknownVar { .. })));
        t.fragments.insert("scalar".into(), "{{pname".into());
        assert!(matches!(generate_stubs(&spec, &t), Err(GenError::Unclosed(_))));
        let (spec, _) = parse_api("int f(char x);").unwrap();
        assert!(matches!(generate_stubs(&spec, &plain()), Err(GenError::UnmappedType { .. })));
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let (spec, _) = parse_api("void saxpy(float* y, const float* x, int n, float alpha);").unwrap();
        let a = generate_stubs(&spec, &plain()).unwrap();
        let b = generate_stubs(&spec, &plain()).unwrap();
        assert_eq!(a, b);
    }
}
