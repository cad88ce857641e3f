//! Annotation files: user-supplied bounds and address spaces for the
//! parameters the parser could not resolve.
//!
//! ```text
//! # comment
//! copy:
//!   dst: size: n, space: device
//!   src: size: n, space: host, dir: in
//! ```
//!
//! A function name at column 0 followed by `:` opens a block; indented
//! lines annotate one parameter each with `size`, `space` and optional
//! `dir` keys.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{ExprError, SizeExpr};
use crate::spec::{AddressSpace, ApiSpec, Direction};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamAnnotation {
    pub size: Option<SizeExpr>,
    pub space: Option<AddressSpace>,
    pub direction: Option<Direction>,
    /// Line the entry came from, for error messages.
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationFile {
    pub functions: BTreeMap<String, BTreeMap<String, ParamAnnotation>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("annotation for unknown function {0}")]
    UnknownFunction(String),
    #[error("annotation for unknown parameter {0}.{1}")]
    UnknownParam(String, String),
    #[error("line {line}: {function}.{param} is a scalar and cannot be annotated")]
    ScalarParam {
        line: usize,
        function: String,
        param: String,
    },
    #[error("line {line}: annotation for {function}.{param} resolves nothing")]
    Redundant {
        line: usize,
        function: String,
        param: String,
    },
    #[error("still unresolved after merge: {}", .0.join(", "))]
    Incomplete(Vec<String>),
}

impl AnnotationFile {
    pub fn parse(text: &str) -> Result<Self, AnnotationError> {
        let mut out = AnnotationFile::default();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let syntax = |msg: String| AnnotationError::Syntax { line, msg };
            let body = raw.split('#').next().unwrap().trim_end();
            if body.trim().is_empty() {
                continue;
            }
            let indented = body.starts_with(char::is_whitespace);
            if !indented {
                let name = body
                    .strip_suffix(':')
                    .filter(|n| is_ident(n))
                    .ok_or_else(|| syntax(format!("expected `function:`, got {body:?}")))?;
                if out.functions.contains_key(name) {
                    return Err(syntax(format!("duplicate block for {name}")));
                }
                out.functions.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let func = current
                .as_ref()
                .ok_or_else(|| syntax("parameter line outside a function block".into()))?;
            let (param, rest) = body
                .trim()
                .split_once(':')
                .ok_or_else(|| syntax("expected `param: key: value, ...`".into()))?;
            let param = param.trim();
            if !is_ident(param) {
                return Err(syntax(format!("bad parameter name {param:?}")));
            }
            let mut ann = ParamAnnotation {
                line,
                ..Default::default()
            };
            for item in rest.split(',') {
                let (key, value) = item
                    .split_once(':')
                    .ok_or_else(|| syntax(format!("expected `key: value`, got {:?}", item.trim())))?;
                let value = value.trim();
                match key.trim() {
                    "size" => {
                        let e = SizeExpr::parse(value)
                            .map_err(|source| AnnotationError::Expr { line, source })?;
                        ann.size = Some(e);
                    }
                    "space" => {
                        ann.space = Some(match value {
                            "host" => AddressSpace::Host,
                            "device" => AddressSpace::Device,
                            _ => return Err(syntax(format!("space must be host or device, got {value:?}"))),
                        })
                    }
                    "dir" => {
                        ann.direction = Some(match value {
                            "in" => Direction::In,
                            "out" => Direction::Out,
                            "inout" => Direction::InOut,
                            _ => return Err(syntax(format!("dir must be in, out or inout, got {value:?}"))),
                        })
                    }
                    other => return Err(syntax(format!("unknown key {other:?}"))),
                }
            }
            let params = out.functions.get_mut(func).unwrap();
            if params.insert(param.to_string(), ann).is_some() {
                return Err(syntax(format!("{func}.{param} annotated twice")));
            }
        }
        Ok(out)
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|f| f.is_ascii_alphabetic() || f == '_')
        && c.all(|x| x.is_ascii_alphanumeric() || x == '_')
}

/// Applies annotations without requiring the result to be complete.
/// Resolved fields are never cleared; an entry that fills no unresolved
/// field is rejected.
pub fn apply_annotations(spec: &ApiSpec, ann: &AnnotationFile) -> Result<ApiSpec, AnnotationError> {
    let mut out = spec.clone();
    for (fname, params) in &ann.functions {
        let f = out
            .functions
            .iter_mut()
            .find(|f| &f.name == fname)
            .ok_or_else(|| AnnotationError::UnknownFunction(fname.clone()))?;
        let scalars: Vec<String> = f.scalar_names().map(str::to_string).collect();
        for (pname, a) in params {
            let p = f
                .params
                .iter_mut()
                .find(|p| &p.name == pname)
                .ok_or_else(|| AnnotationError::UnknownParam(fname.clone(), pname.clone()))?;
            if !p.pointer {
                return Err(AnnotationError::ScalarParam {
                    line: a.line,
                    function: fname.clone(),
                    param: pname.clone(),
                });
            }
            let mut resolved = false;
            if let Some(e) = &a.size {
                e.validate(scalars.iter().map(String::as_str))
                    .map_err(|source| AnnotationError::Expr { line: a.line, source })?;
                if p.size.is_none() {
                    resolved = true;
                }
                p.size = Some(e.clone());
            }
            if let Some(s) = a.space {
                if p.space.is_none() {
                    resolved = true;
                }
                p.space = Some(s);
            }
            if let Some(d) = a.direction {
                p.direction = d;
            }
            if !resolved {
                return Err(AnnotationError::Redundant {
                    line: a.line,
                    function: fname.clone(),
                    param: pname.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Applies annotations and requires every function to end up Complete.
pub fn merge_annotations(spec: &ApiSpec, ann: &AnnotationFile) -> Result<ApiSpec, AnnotationError> {
    let out = apply_annotations(spec, ann)?;
    let left = out.unresolved();
    if left.is_empty() {
        Ok(out)
    } else {
        Err(AnnotationError::Incomplete(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_api;

    const COPY: &str = "void copy(void* dst, const void* src, size_t n);";

    #[test]
    fn copy_annotation_completes() {
        let (spec, _) = parse_api(COPY).unwrap();
        let ann = AnnotationFile::parse("copy:\n  dst: size: n, space: device\n  src: size: n, space: host\n").unwrap();
        let merged = merge_annotations(&spec, &ann).unwrap();
        let f = merged.function("copy").unwrap();
        assert!(f.is_complete());
        assert_eq!(f.params[0].space, Some(AddressSpace::Device));
        assert_eq!(f.params[1].size.as_ref().unwrap().to_string(), "n");
    }

    #[test]
    fn absent_function_is_an_error() {
        let (spec, _) = parse_api(COPY).unwrap();
        let ann = AnnotationFile::parse("paste:\n  dst: size: n, space: host\n").unwrap();
        assert_eq!(
            merge_annotations(&spec, &ann),
            Err(AnnotationError::UnknownFunction("paste".into()))
        );
    }

    #[test]
    fn ill_formed_and_foreign_sizes_are_rejected() {
        assert!(matches!(
            AnnotationFile::parse("copy:\n  dst: size: n *, space: host\n"),
            Err(AnnotationError::Expr { line: 2, .. })
        ));
        let (spec, _) = parse_api(COPY).unwrap();
        let ann = AnnotationFile::parse("copy:\n  dst: size: m, space: host\n  src: size: n, space: host\n").unwrap();
        assert!(matches!(
            merge_annotations(&spec, &ann),
            Err(AnnotationError::Expr { source: ExprError::UnknownVar(_), .. })
        ));
    }

    #[test]
    fn partial_annotation_reports_what_remains() {
        let (spec, _) = parse_api(COPY).unwrap();
        let ann = AnnotationFile::parse("copy:\n  dst: size: n, space: host\n").unwrap();
        assert_eq!(
            merge_annotations(&spec, &ann),
            Err(AnnotationError::Incomplete(vec!["copy.src".into()]))
        );
    }

    #[test]
    fn redundant_entries_are_rejected() {
        let (spec, _) = parse_api("void inc(int* v, int n);").unwrap();
        let ann = AnnotationFile::parse("inc:\n  v: size: n * 4\n").unwrap();
        assert!(matches!(
            apply_annotations(&spec, &ann),
            Err(AnnotationError::Redundant { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_line() {
        for (text, line) in [
            ("  x: size: 1\n", 1),
            ("f:\n  x size 1\n", 2),
            ("f:\n  x: colour: red\n", 2),
            ("f:\n# c\n  x: space: gpu\n", 3),
            ("f g:\n", 1),
        ] {
            match AnnotationFile::parse(text) {
                Err(AnnotationError::Syntax { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
