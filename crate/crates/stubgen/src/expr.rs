//! Size expressions: byte counts written over sibling scalar parameters.
//!
//! Grammar: `expr := term (('+' | '-') term)*`, `term := atom (('*' | '/') atom)*`,
//! `atom := number | ident | 'sizeof' '(' type ')' | '(' expr ')'`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn prec(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SizeExpr {
    Num(u64),
    Var(String),
    SizeOf(String),
    Bin(BinOp, Box<SizeExpr>, Box<SizeExpr>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("size expression {text:?}: {msg} at offset {at}")]
    Syntax { text: String, at: usize, msg: String },
    #[error("size expression references {0:?}, which is not a scalar parameter")]
    UnknownVar(String),
    #[error("sizeof of unknown type {0:?}")]
    UnknownType(String),
}

/// Byte width of a C base type, `None` for `void` and unknown names.
pub fn sizeof(base: &str) -> Option<u64> {
    Some(match base {
        "char" | "signed char" | "unsigned char" | "bool" | "_Bool" | "int8_t" | "uint8_t" => 1,
        "short" | "unsigned short" | "short int" | "int16_t" | "uint16_t" => 2,
        "int" | "unsigned" | "unsigned int" | "signed int" | "int32_t" | "uint32_t" | "float" => 4,
        "long" | "unsigned long" | "long int" | "long long" | "unsigned long long" | "size_t"
        | "ssize_t" | "int64_t" | "uint64_t" | "double" | "uintptr_t" => 8,
        _ => return None,
    })
}

pub fn is_integer_type(base: &str) -> bool {
    sizeof(base).is_some() && !matches!(base, "float" | "double" | "bool" | "_Bool")
}

impl SizeExpr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn times(self, rhs: SizeExpr) -> SizeExpr {
        SizeExpr::Bin(BinOp::Mul, Box::new(self), Box::new(rhs))
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let SizeExpr::Var(v) = e {
                out.insert(v.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a SizeExpr)) {
        f(self);
        if let SizeExpr::Bin(_, l, r) = self {
            l.walk(f);
            r.walk(f);
        }
    }

    /// Checks every variable is one of `scalars` and every `sizeof` names a
    /// known type.
    pub fn validate<'s>(&self, scalars: impl IntoIterator<Item = &'s str> + Clone) -> Result<(), ExprError> {
        let mut err = None;
        self.walk(&mut |e| match e {
            SizeExpr::Var(v) if err.is_none() && !scalars.clone().into_iter().any(|s| s == v) => {
                err = Some(ExprError::UnknownVar(v.clone()));
            }
            SizeExpr::SizeOf(t) if err.is_none() && sizeof(t).is_none() => {
                err = Some(ExprError::UnknownType(t.clone()));
            }
            _ => {}
        });
        err.map_or(Ok(()), Err)
    }

    /// Evaluates with `lookup` supplying variable values. Division by zero
    /// and overflow give `None`.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<u64>) -> Option<u64> {
        match self {
            SizeExpr::Num(n) => Some(*n),
            SizeExpr::Var(v) => lookup(v),
            SizeExpr::SizeOf(t) => sizeof(t),
            SizeExpr::Bin(op, l, r) => {
                let (a, b) = (l.eval(lookup)?, r.eval(lookup)?);
                match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div => a.checked_div(b),
                }
            }
        }
    }

    /// Renders with `var` producing the target-language text for a
    /// variable; `sizeof` is folded to its byte width.
    pub fn render(&self, var: &dyn Fn(&str) -> String) -> String {
        match self {
            SizeExpr::Num(n) => n.to_string(),
            SizeExpr::Var(v) => var(v),
            SizeExpr::SizeOf(t) => sizeof(t).map_or_else(|| format!("sizeof({t})"), |n| n.to_string()),
            SizeExpr::Bin(op, l, r) => format!("({} {} {})", l.render(var), op.symbol(), r.render(var)),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        match self {
            SizeExpr::Num(n) => write!(f, "{n}"),
            SizeExpr::Var(v) => write!(f, "{v}"),
            SizeExpr::SizeOf(t) => write!(f, "sizeof({t})"),
            SizeExpr::Bin(op, l, r) => {
                let p = op.prec();
                let paren = p < parent || (right && p == parent);
                if paren {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, p, false)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, p, true)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for SizeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

impl Serialize for SizeExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SizeExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        SizeExpr::parse(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            text: self.text.to_string(),
            at: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<SizeExpr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = SizeExpr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<SizeExpr, ExprError> {
        let mut lhs = self.atom()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = SizeExpr::Bin(op, Box::new(lhs), Box::new(self.atom()?));
        }
        Ok(lhs)
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn atom(&mut self) -> Result<SizeExpr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let digits = self.ident();
                digits
                    .parse()
                    .map(SizeExpr::Num)
                    .map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident().to_string();
                if name != "sizeof" {
                    return Ok(SizeExpr::Var(name));
                }
                self.expect(b'(')?;
                let mut words = Vec::new();
                while let Some(c) = self.peek() {
                    if !(c.is_ascii_alphabetic() || c == b'_') {
                        break;
                    }
                    words.push(self.ident().to_string());
                }
                self.expect(b')')?;
                if words.is_empty() {
                    return Err(self.err("empty sizeof"));
                }
                Ok(SizeExpr::SizeOf(words.join(" ")))
            }
            _ => Err(self.err("expected number, name or '('")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_display() {
        let e = SizeExpr::parse("n*(m+1) - 2/k").unwrap();
        assert_eq!(e.to_string(), "n * (m + 1) - 2 / k");
        let v = |s: &str| Some(match s { "n" => 3, "m" => 4, "k" => 2, _ => 0 });
        assert_eq!(e.eval(&v), Some(14));
        assert_eq!(SizeExpr::parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn right_operand_of_same_precedence_keeps_parens() {
        let e = SizeExpr::parse("a - (b - c)").unwrap();
        assert_eq!(e.to_string(), "a - (b - c)");
        let e = SizeExpr::parse("a / (b * c)").unwrap();
        assert_eq!(e.to_string(), "a / (b * c)");
    }

    #[test]
    fn sizeof_and_validation() {
        let e = SizeExpr::parse("rows * cols * sizeof(unsigned int)").unwrap();
        assert_eq!(e.eval(&|_| Some(2)), Some(16));
        assert!(e.validate(["rows", "cols"]).is_ok());
        assert_eq!(e.validate(["rows"]), Err(ExprError::UnknownVar("cols".into())));
        assert!(SizeExpr::parse("sizeof(widget)").unwrap().validate([]).is_err());
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "n *", "(n", "n m", "sizeof()", "3x+"] {
            assert!(SizeExpr::parse(bad).is_err(), "{bad:?}");
        }
    }
}
