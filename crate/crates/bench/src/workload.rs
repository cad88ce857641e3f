//! Workload files.
//!
//! A workload is a set of application instances. Each instance owns some
//! task queues; every queue runs the instance's step list over its own copy
//! of the instance's buffers.
//!
//! ```toml
//! name = "pair"
//! seed = 7
//!
//! [occupancy]              # optional per-kernel overrides
//! grid_relax = 1.0
//!
//! [kernel_types]           # optional: restrict kernels to device types
//! path_dp = ["cpu"]
//!
//! [[instance]]
//! name = "relax"
//! priority = "low"         # or "high"
//! queues = 2
//! copies = 1               # identical instances named relax.0, relax.1, ...
//! arrival_us = 0
//!
//! [[instance.buffer]]
//! name = "grid"
//! size = "64KiB"
//! init = "random_f32"      # zero | ramp | random_f32 | random_i32
//!
//! [[instance.step]]
//! op = "upload"
//! buffer = "grid"
//!
//! [[instance.step]]
//! op = "kernel"
//! kernel = "grid_relax"
//! args = ["grid:inout"]
//! scalars = ["i32:64", "i32:64", "i32:4", "i32:1"]
//! repeat = 10
//!
//! [[instance.step]]
//! op = "download"
//! buffer = "grid"
//! ```
//!
//! Other steps: `barrier` waits for everything the queue issued, and
//! `transfer_probe` (`bytes`, `reps`) times staged uploads against a plain
//! memory copy. Scalars are `type:value` with type `i32`, `u32`, `u64` or
//! `f32`; an integer value of `iter` is the repeat index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use arax::backends::DeviceType;
use arax::server::parse_size;
use arax::{Direction, PriorityClass};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("parsing workload: {0}")]
    Parse(String),
    #[error("{instance}: {msg}")]
    Invalid { instance: String, msg: String },
    #[error("{instance}: kernel {kernel:?} is not registered")]
    UnknownKernel { instance: String, kernel: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub occupancy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kernel_types: BTreeMap<String, Vec<DeviceType>>,
    #[serde(default, rename = "instance")]
    pub instances: Vec<InstanceSpec>,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    #[default]
    Low,
    High,
}

impl From<Priority> for PriorityClass {
    fn from(p: Priority) -> Self {
        match p {
            Priority::Low => PriorityClass::Low,
            Priority::High => PriorityClass::High,
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Priority::Low => "low",
            Priority::High => "high",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub name: String,
    #[serde(default)]
    pub priority: Priority,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub queues: u32,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub copies: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub arrival_us: u64,
    #[serde(default, rename = "buffer")]
    pub buffers: Vec<BufferSpec>,
    #[serde(default, rename = "step")]
    pub steps: Vec<Step>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zero,
    /// Little-endian i32 0, 1, 2, ...
    Ramp,
    /// f32 uniform in [-1, 1).
    RandomF32,
    /// i32 uniform in [0, 100).
    RandomI32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    pub name: String,
    #[serde(deserialize_with = "size_de")]
    pub size: u64,
    #[serde(default)]
    pub init: Init,
}

fn size_de<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        N(u64),
        S(String),
    }
    match Raw::deserialize(d)? {
        Raw::N(n) => Ok(n),
        Raw::S(s) => parse_size(&s).map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Upload {
        buffer: String,
    },
    Download {
        buffer: String,
    },
    Kernel {
        kernel: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        args: Vec<Arg>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        scalars: Vec<Scalar>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        repeat: u32,
    },
    Barrier,
    TransferProbe {
        #[serde(deserialize_with = "size_de")]
        bytes: u64,
        #[serde(default = "five")]
        reps: u32,
    },
}

fn five() -> u32 {
    5
}

/// `buffer:dir`, dir one of `in`, `out`, `inout`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arg {
    pub buffer: String,
    pub dir: Direction,
}

impl FromStr for Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (buffer, dir) = s.split_once(':').ok_or_else(|| format!("argument {s:?} is not buffer:dir"))?;
        let dir = match dir {
            "in" => Direction::In,
            "out" => Direction::Out,
            "inout" => Direction::InOut,
            _ => return Err(format!("argument {s:?}: direction must be in, out or inout")),
        };
        Ok(Arg {
            buffer: buffer.to_string(),
            dir,
        })
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.dir {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        };
        write!(f, "{}:{d}", self.buffer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntValue {
    Lit(u64),
    /// The repeat index of the enclosing kernel step.
    Iter,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    I32(IntValue),
    U32(IntValue),
    U64(IntValue),
    F32(f32),
}

impl Scalar {
    pub fn i32(v: i32) -> Self {
        Scalar::I32(IntValue::Lit(v as u32 as u64))
    }

    pub fn u64(v: u64) -> Self {
        Scalar::U64(IntValue::Lit(v))
    }

    /// Appends the little-endian encoding for repeat index `iter`.
    pub fn encode(&self, iter: u32, out: &mut Vec<u8>) {
        let int = |v: &IntValue| match v {
            IntValue::Lit(n) => *n,
            IntValue::Iter => u64::from(iter),
        };
        match self {
            Scalar::I32(v) => out.extend_from_slice(&(int(v) as u32).to_le_bytes()),
            Scalar::U32(v) => out.extend_from_slice(&(int(v) as u32).to_le_bytes()),
            Scalar::U64(v) => out.extend_from_slice(&int(v).to_le_bytes()),
            Scalar::F32(x) => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
}

impl FromStr for Scalar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (ty, v) = s.split_once(':').ok_or_else(|| format!("scalar {s:?} is not type:value"))?;
        let bad = || format!("scalar {s:?}: bad value");
        let int = |v: &str, lo: i128, hi: i128| -> Result<IntValue, String> {
            if v == "iter" {
                return Ok(IntValue::Iter);
            }
            let n: i128 = v.parse().map_err(|_| bad())?;
            if n < lo || n > hi {
                return Err(bad());
            }
            // negative i32 literals keep their 32-bit pattern
            Ok(IntValue::Lit(if n < 0 { n as i32 as u32 as u64 } else { n as u64 }))
        };
        match ty {
            "i32" => Ok(Scalar::I32(int(v, i32::MIN.into(), i32::MAX.into())?)),
            "u32" => Ok(Scalar::U32(int(v, 0, u32::MAX.into())?)),
            "u64" => Ok(Scalar::U64(int(v, 0, u64::MAX.into())?)),
            "f32" => v.parse().map(Scalar::F32).map_err(|_| bad()),
            _ => Err(format!("scalar {s:?}: unknown type {ty:?}")),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = |v: &IntValue, signed: bool| match v {
            IntValue::Iter => "iter".to_string(),
            IntValue::Lit(n) if signed => (*n as u32 as i32).to_string(),
            IntValue::Lit(n) => n.to_string(),
        };
        match self {
            Scalar::I32(v) => write!(f, "i32:{}", int(v, true)),
            Scalar::U32(v) => write!(f, "u32:{}", int(v, false)),
            Scalar::U64(v) => write!(f, "u64:{}", int(v, false)),
            Scalar::F32(x) => write!(f, "f32:{x:?}"),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Arg);
string_serde!(Scalar);

impl Step {
    /// Tasks this step puts on one queue.
    pub fn task_count(&self) -> u64 {
        match self {
            Step::Upload { .. } | Step::Download { .. } => 1,
            Step::Kernel { repeat, .. } => u64::from(*repeat),
            Step::Barrier => 0,
            Step::TransferProbe { reps, .. } => u64::from(*reps) + 1,
        }
    }
}

impl InstanceSpec {
    pub fn tasks_per_queue(&self) -> u64 {
        self.steps.iter().map(Step::task_count).sum()
    }

    fn buffer(&self, name: &str) -> Option<usize> {
        self.buffers.iter().position(|b| b.name == name)
    }
}

impl WorkloadSpec {
    pub fn from_toml(text: &str) -> Result<Self, WorkloadError> {
        toml::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("workloads serialize")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    /// Instances after expanding `copies`, in file order.
    pub fn expanded(&self) -> Vec<InstanceSpec> {
        let mut out = Vec::new();
        for inst in &self.instances {
            if inst.copies == 1 {
                out.push(inst.clone());
                continue;
            }
            for c in 0..inst.copies {
                let mut i = inst.clone();
                i.name = format!("{}.{c}", inst.name);
                i.copies = 1;
                out.push(i);
            }
        }
        out
    }

    pub fn total_tasks(&self) -> u64 {
        self.expanded()
            .iter()
            .map(|i| i.tasks_per_queue() * u64::from(i.queues))
            .sum()
    }

    /// Structural checks, and every kernel known to `is_kernel`.
    pub fn validate(&self, is_kernel: &dyn Fn(&str) -> bool) -> Result<(), WorkloadError> {
        let mut names = BTreeSet::new();
        for inst in self.expanded() {
            let invalid = |msg: String| WorkloadError::Invalid {
                instance: inst.name.clone(),
                msg,
            };
            if !names.insert(inst.name.clone()) {
                return Err(invalid("duplicate instance name".into()));
            }
            if inst.queues == 0 {
                return Err(invalid("queues must be at least 1".into()));
            }
            let mut bufs = BTreeSet::new();
            for b in &inst.buffers {
                if !bufs.insert(&b.name) {
                    return Err(invalid(format!("duplicate buffer {}", b.name)));
                }
                if b.size == 0 {
                    return Err(invalid(format!("buffer {} has size 0", b.name)));
                }
            }
            for s in &inst.steps {
                match s {
                    Step::Upload { buffer } | Step::Download { buffer } => {
                        if inst.buffer(buffer).is_none() {
                            return Err(invalid(format!("unknown buffer {buffer}")));
                        }
                    }
                    Step::Kernel { kernel, args, .. } => {
                        if !is_kernel(kernel) {
                            return Err(WorkloadError::UnknownKernel {
                                instance: inst.name.clone(),
                                kernel: kernel.clone(),
                            });
                        }
                        for a in args {
                            if inst.buffer(&a.buffer).is_none() {
                                return Err(invalid(format!("unknown buffer {}", a.buffer)));
                            }
                        }
                    }
                    Step::TransferProbe { bytes, reps } => {
                        if *bytes == 0 || *reps == 0 {
                            return Err(invalid("transfer_probe needs bytes and reps".into()));
                        }
                    }
                    Step::Barrier => {}
                }
            }
        }
        Ok(())
    }

    /// Buffer index of `name` in `inst`, for the driver.
    pub(crate) fn buffer_index(inst: &InstanceSpec, name: &str) -> usize {
        inst.buffer(name).expect("validated")
    }
}
