//! The API specification file.
//!
//! Serialized as JSON:
//!
//! ```json
//! { "functions": [ {
//!     "name": "copy", "return_type": "void",
//!     "params": [ { "name": "dst", "base_type": "void", "pointer": true, "is_const": false,
//!                   "direction": "inout", "space": null, "size": null } ]
//! } ] }
//! ```
//!
//! `space` and `size` are `null` while unresolved. Sizes are byte counts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::SizeExpr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    pub fn reads(self) -> bool {
        matches!(self, Direction::In | Direction::InOut)
    }

    pub fn writes(self) -> bool {
        matches!(self, Direction::Out | Direction::InOut)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddressSpace {
    Host,
    Device,
    Scalar,
}

impl fmt::Display for AddressSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AddressSpace::Host => "host",
            AddressSpace::Device => "device",
            AddressSpace::Scalar => "scalar",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub base_type: String,
    pub pointer: bool,
    pub is_const: bool,
    pub direction: Direction,
    pub space: Option<AddressSpace>,
    pub size: Option<SizeExpr>,
}

impl ParamSpec {
    pub fn is_resolved(&self) -> bool {
        self.space.is_some() && self.size.is_some()
    }

    pub fn is_scalar(&self) -> bool {
        !self.pointer
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub return_type: String,
    pub params: Vec<ParamSpec>,
}

impl FunctionSpec {
    pub fn is_complete(&self) -> bool {
        self.params.iter().all(ParamSpec::is_resolved)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn scalar_names(&self) -> impl Iterator<Item = &str> + Clone {
        self.params
            .iter()
            .filter(|p| p.is_scalar())
            .map(|p| p.name.as_str())
    }

    pub fn unresolved(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| !p.is_resolved())
            .map(|p| p.name.as_str())
            .collect()
    }

    /// C declaration text, as it would appear in a header.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| {
                let c = if p.is_const { "const " } else { "" };
                let star = if p.pointer { "*" } else { "" };
                format!("{c}{}{star} {}", p.base_type, p.name)
            })
            .collect();
        let params = if params.is_empty() {
            "void".to_string()
        } else {
            params.join(", ")
        };
        format!("{} {}({params});", self.return_type, self.name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub functions: Vec<FunctionSpec>,
}

impl ApiSpec {
    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn complete_count(&self) -> usize {
        self.functions.iter().filter(|f| f.is_complete()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.functions.iter().all(FunctionSpec::is_complete)
    }

    /// `function.param` for every unresolved parameter, in order.
    pub fn unresolved(&self) -> Vec<String> {
        self.functions
            .iter()
            .flat_map(|f| f.unresolved().into_iter().map(move |p| format!("{}.{p}", f.name)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
