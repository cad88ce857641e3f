//! Header parser for a small C declaration subset.
//!
//! Accepted: `ret name(type arg, ...);` declarations with `const`, single
//! pointers and array parameters (`float x[n]`), `//` and `/* */`
//! comments. Doc comments (`/** ... */` or `///`) right before a
//! declaration may carry hints:
//!
//! ```text
//! @param[in] x        @param[out] y        @param[in,out] z
//! @size y n * 4       @space y device
//! ```
//!
//! Resolution rules, per parameter:
//!
//! * scalar: direction `in`, space `scalar`, size = width of the type.
//! * pointer direction: hint, else `in` for `const T*`, else `inout`.
//! * pointer space: hint, else `host` for typed pointers; `void*` stays
//!   unresolved.
//! * pointer size: `@size` hint; else the array bound times the element
//!   width; else, for typed pointers, an element count taken from a sibling
//!   integer named `<p>_len`, `<p>_count`, `<p>_size`, `n_<p>` or `num_<p>`,
//!   or from the single sibling among `n`, `len`, `count`, `num`, `length`,
//!   `nelem`. Anything else is unresolved.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{is_integer_type, sizeof, SizeExpr};
use crate::spec::{AddressSpace, ApiSpec, Direction, FunctionSpec, ParamSpec};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Punct(char),
    Ellipsis,
    Doc(String),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// Byte offset, used to slice array bounds out of the source.
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let b = src.as_bytes();
    let (mut i, mut line, mut line_start) = (0usize, 1usize, 0usize);
    let mut out = Vec::new();
    while i < b.len() {
        let col = i - line_start + 1;
        let c = b[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let (tok_line, start) = (line, i);
        if src[i..].starts_with("//") {
            let end = src[i..].find('\n').map_or(b.len(), |n| i + n);
            if src[i..].starts_with("///") && !src[i..].starts_with("////") {
                out.push(Token {
                    tok: Tok::Doc(src[i + 3..end].to_string()),
                    line,
                    col,
                    start,
                    end,
                });
            }
            i = end;
            continue;
        }
        if src[i..].starts_with("/*") {
            let close = src[i + 2..].find("*/").ok_or(ParseError {
                line,
                col,
                msg: "unterminated comment".into(),
            })?;
            let end = i + 2 + close + 2;
            let body = &src[i + 2..end - 2];
            line += body.matches('\n').count();
            if let Some(nl) = src[..end].rfind('\n') {
                if nl >= i {
                    line_start = nl + 1;
                }
            }
            if body.starts_with('*') && !body.starts_with("**") && body.len() > 1 {
                out.push(Token {
                    tok: Tok::Doc(body[1..].to_string()),
                    line: tok_line,
                    col,
                    start,
                    end,
                });
            }
            i = end;
            continue;
        }
        if src[i..].starts_with("...") {
            out.push(Token {
                tok: Tok::Ellipsis,
                line,
                col,
                start,
                end: i + 3,
            });
            i += 3;
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else if c.is_ascii_digit() {
            while i < b.len() && b[i].is_ascii_alphanumeric() {
                i += 1;
            }
            Tok::Num(src[start..i].to_string())
        } else if b"(),;*[]+-/".contains(&c) {
            i += 1;
            Tok::Punct(c as char)
        } else {
            return Err(ParseError {
                line,
                col,
                msg: format!("unexpected character {:?}", c as char),
            });
        };
        out.push(Token {
            tok,
            line,
            col,
            start,
            end: i,
        });
    }
    Ok(out)
}

#[derive(Default)]
struct Hints {
    direction: BTreeMap<String, Direction>,
    size: BTreeMap<String, (String, usize)>,
    space: BTreeMap<String, AddressSpace>,
}

fn parse_hints(docs: &[Token]) -> Result<Hints, ParseError> {
    let mut h = Hints::default();
    for d in docs {
        let Tok::Doc(text) = &d.tok else { continue };
        for (k, raw) in text.lines().enumerate() {
            let err = |msg: String| ParseError {
                line: d.line + k,
                col: 1,
                msg,
            };
            let l = raw.trim().trim_start_matches('*').trim();
            let Some(rest) = l.strip_prefix('@') else { continue };
            let (tag, rest) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let mut words = rest.split_whitespace();
            match tag {
                "param" | "param[in]" | "param[out]" | "param[in,out]" | "param[inout]" => {
                    let name = words.next().ok_or_else(|| err(format!("@{tag} needs a name")))?;
                    let dir = match tag {
                        "param[in]" => Direction::In,
                        "param[out]" => Direction::Out,
                        "param[in,out]" | "param[inout]" => Direction::InOut,
                        _ => continue,
                    };
                    h.direction.insert(name.to_string(), dir);
                }
                "size" => {
                    let name = words.next().ok_or_else(|| err("@size needs a name".into()))?;
                    let expr = rest.trim_start()[name.len()..].trim();
                    if expr.is_empty() {
                        return Err(err(format!("@size {name} needs an expression")));
                    }
                    h.size.insert(name.to_string(), (expr.to_string(), d.line + k));
                }
                "space" => {
                    let name = words.next().ok_or_else(|| err("@space needs a name".into()))?;
                    let space = match words.next() {
                        Some("host") => AddressSpace::Host,
                        Some("device") => AddressSpace::Device,
                        other => return Err(err(format!("@space {name}: bad space {other:?}"))),
                    };
                    h.space.insert(name.to_string(), space);
                }
                _ => {}
            }
        }
    }
    Ok(h)
}

struct RawParam {
    base: String,
    pointer: bool,
    is_const: bool,
    name: String,
    bound: Option<(String, usize, usize)>,
}

struct Cursor<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn err_at(&self, t: Option<&Token>, msg: impl Into<String>) -> ParseError {
        let (line, col) = t
            .or_else(|| self.toks.last())
            .map_or((1, 1), |t| (t.line, t.col));
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        self.err_at(self.peek(), msg)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.is_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    /// `[const] words [*] [const] name [ '[' bound ']' ]`, ending before
    /// `,` or `)` (params) or `(` (the function name).
    fn declarator(&mut self, what: &str, stop: &[char]) -> Result<RawParam, ParseError> {
        let first = self.peek();
        let mut words: Vec<String> = Vec::new();
        let mut is_const = false;
        let mut stars = 0;
        let mut bound = None;
        while let Some(t) = self.peek() {
            match &t.tok {
                Tok::Ident(w) if w == "const" => {
                    if stars == 0 {
                        is_const = true;
                    }
                    self.pos += 1;
                }
                Tok::Ident(w) if matches!(w.as_str(), "struct" | "union" | "enum" | "typedef") => {
                    return Err(self.err(format!("{w} is not supported")));
                }
                Tok::Ident(w) => {
                    words.push(w.clone());
                    self.pos += 1;
                }
                Tok::Punct('*') => {
                    stars += 1;
                    if stars > 1 {
                        return Err(self.err("pointer-to-pointer is not supported"));
                    }
                    self.pos += 1;
                }
                Tok::Punct('[') => {
                    let open = self.next().unwrap();
                    let mut depth = 1;
                    let mut close = None;
                    while let Some(t) = self.next() {
                        match t.tok {
                            Tok::Punct('[') => depth += 1,
                            Tok::Punct(']') => {
                                depth -= 1;
                                if depth == 0 {
                                    close = Some(t);
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    let close = close.ok_or_else(|| self.err_at(Some(open), "unclosed '['"))?;
                    let text = self.src[open.end..close.start].trim().to_string();
                    if text.is_empty() {
                        return Err(self.err_at(Some(open), "array parameter needs a bound"));
                    }
                    bound = Some((text, open.line, open.col));
                    break;
                }
                Tok::Punct('(') if stop.contains(&'(') => break,
                Tok::Punct('(') => return Err(self.err("function pointers are not supported")),
                Tok::Ellipsis => return Err(self.err("varargs are not supported")),
                Tok::Punct(c) if stop.contains(c) => break,
                _ => return Err(self.err(format!("unexpected token in {what}"))),
            }
        }
        if stars > 0 && bound.is_some() {
            return Err(self.err("array of pointers is not supported"));
        }
        if words.len() < 2 {
            return Err(self.err_at(first, format!("{what} needs a type and a name")));
        }
        let name = words.pop().unwrap();
        Ok(RawParam {
            base: words.join(" "),
            pointer: stars == 1 || bound.is_some(),
            is_const,
            name,
            bound,
        })
    }
}

/// Parses a header. Returns the spec and the names of functions that are
/// not Complete.
pub fn parse_api(src: &str) -> Result<(ApiSpec, Vec<String>), ParseError> {
    let toks = lex(src)?;
    let mut c = Cursor {
        src,
        toks: &toks,
        pos: 0,
    };
    let mut spec = ApiSpec::default();
    let mut docs: Vec<Token> = Vec::new();
    while let Some(t) = c.peek() {
        if let Tok::Doc(_) = t.tok {
            docs.push(t.clone());
            c.pos += 1;
            continue;
        }
        let start = t.clone();
        let head = c.declarator("declaration", &['('])?;
        if head.bound.is_some() {
            return Err(c.err_at(Some(&start), "array return types are not supported"));
        }
        c.expect('(')?;
        let mut raw = Vec::new();
        let void_only = matches!(
            (c.toks.get(c.pos), c.toks.get(c.pos + 1)),
            (Some(Token { tok: Tok::Ident(v), .. }), Some(Token { tok: Tok::Punct(')'), .. })) if v == "void"
        );
        if void_only {
            c.pos += 1;
        }
        while !c.is_punct(')') {
            raw.push(c.declarator("parameter", &[',', ')'])?);
            if c.is_punct(',') {
                c.pos += 1;
                if c.is_punct(')') {
                    return Err(c.err("expected parameter"));
                }
            }
        }
        c.expect(')')?;
        c.expect(';')?;
        let ret = if head.pointer {
            format!("{}*", head.base)
        } else {
            head.base.clone()
        };
        let hints = parse_hints(&docs)?;
        docs.clear();
        if spec.function(&head.name).is_some() {
            return Err(c.err_at(Some(&start), format!("duplicate function {}", head.name)));
        }
        let f = resolve(&head.name, ret, raw, &hints, &start)?;
        spec.functions.push(f);
    }
    let unresolved = spec
        .functions
        .iter()
        .filter(|f| !f.is_complete())
        .map(|f| f.name.clone())
        .collect();
    Ok((spec, unresolved))
}

const GENERIC_COUNTS: [&str; 6] = ["n", "len", "count", "num", "length", "nelem"];

fn resolve(
    name: &str,
    return_type: String,
    raw: Vec<RawParam>,
    hints: &Hints,
    at: &Token,
) -> Result<FunctionSpec, ParseError> {
    let err = |line: usize, col: usize, msg: String| ParseError { line, col, msg };
    let hinted = hints
        .direction
        .keys()
        .chain(hints.size.keys())
        .chain(hints.space.keys());
    for p in hinted {
        if !raw.iter().any(|r| &r.name == p) {
            return Err(err(at.line, at.col, format!("{name}: hint for unknown parameter {p}")));
        }
    }
    let ints: Vec<&str> = raw
        .iter()
        .filter(|r| !r.pointer && is_integer_type(&r.base))
        .map(|r| r.name.as_str())
        .collect();
    let scalars: Vec<&str> = raw.iter().filter(|r| !r.pointer).map(|r| r.name.as_str()).collect();
    let mut params = Vec::with_capacity(raw.len());
    for r in &raw {
        if raw.iter().filter(|o| o.name == r.name).count() > 1 {
            return Err(err(at.line, at.col, format!("{name}: duplicate parameter {}", r.name)));
        }
        if !r.pointer {
            params.push(ParamSpec {
                name: r.name.clone(),
                base_type: r.base.clone(),
                pointer: false,
                is_const: r.is_const,
                direction: Direction::In,
                space: Some(AddressSpace::Scalar),
                size: sizeof(&r.base).map(SizeExpr::Num),
            });
            continue;
        }
        let elem = (r.base != "void").then(|| SizeExpr::SizeOf(r.base.clone()));
        let scaled = |e: SizeExpr| match &elem {
            Some(w) => e.times(w.clone()),
            None => e,
        };
        let size = if let Some((text, line)) = hints.size.get(&r.name) {
            let e = SizeExpr::parse(text).map_err(|e| err(*line, 1, format!("{name}.{}: {e}", r.name)))?;
            e.validate(scalars.iter().copied())
                .map_err(|e| err(*line, 1, format!("{name}.{}: {e}", r.name)))?;
            Some(e)
        } else if let Some((text, line, col)) = &r.bound {
            let e = SizeExpr::parse(text).map_err(|e| err(*line, *col, format!("{name}.{}: {e}", r.name)))?;
            e.validate(scalars.iter().copied())
                .map_err(|e| err(*line, *col, format!("{name}.{}: {e}", r.name)))?;
            Some(scaled(e))
        } else if elem.is_some() {
            let p = &r.name;
            let specific = [
                format!("{p}_len"),
                format!("{p}_count"),
                format!("{p}_size"),
                format!("n_{p}"),
                format!("num_{p}"),
            ];
            let count = specific
                .iter()
                .find(|s| ints.contains(&s.as_str()))
                .cloned()
                .or_else(|| {
                    let g: Vec<&&str> = ints.iter().filter(|i| GENERIC_COUNTS.contains(i)).collect();
                    (g.len() == 1).then(|| g[0].to_string())
                });
            count.map(|v| scaled(SizeExpr::Var(v)))
        } else {
            None
        };
        let direction = hints.direction.get(&r.name).copied().unwrap_or(if r.is_const {
            Direction::In
        } else {
            Direction::InOut
        });
        let space = hints
            .space
            .get(&r.name)
            .copied()
            .or(elem.is_some().then_some(AddressSpace::Host));
        params.push(ParamSpec {
            name: r.name.clone(),
            base_type: r.base.clone(),
            pointer: true,
            is_const: r.is_const,
            direction,
            space,
            size,
        });
    }
    Ok(FunctionSpec {
        name: name.to_string(),
        return_type,
        params,
    })
}
