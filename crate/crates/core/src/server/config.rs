//! Server configuration: device roster and engine knobs, loaded from TOML.
//!
//! ```toml
//! threads_per_device = 2
//! policy = "elastic"          # or "roundrobin"
//! mode = "shared"             # or "timeslice"
//! clock = "virtual"           # or "real"
//!
//! [occupancy]
//! grid_relax = 1.0
//!
//! [kernel_types]              # restrict a kernel to some device types
//! gaussian_step = ["cpu"]
//!
//! [[device]]
//! name = "gpu0"
//! type = "sim_gpu"
//! speed_factor = 0.0
//! streams = 4
//! mem_capacity = "256MiB"
//! kernel_set = "*"
//! reload_penalty_ms = 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::backends::{
    standard_library, ClockKind, DeviceDescriptor, DeviceType, DispatchTable, TimingModel,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize)]
pub enum Policy {
    #[default]
    #[serde(rename = "roundrobin", alias = "round-robin", alias = "round_robin")]
    RoundRobin,
    #[serde(rename = "elastic")]
    Elastic,
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "roundrobin" | "round-robin" | "round_robin" | "rr" => Ok(Policy::RoundRobin),
            "elastic" => Ok(Policy::Elastic),
            _ => Err(format!("unknown policy {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingMode {
    /// Queues on one device run concurrently on separate streams.
    #[default]
    Shared,
    /// One active queue per device, rotated every quantum.
    Timeslice,
}

impl FromStr for SharingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "shared" => Ok(SharingMode::Shared),
            "timeslice" | "time-slice" => Ok(SharingMode::Timeslice),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub devices: Vec<DeviceDescriptor>,
    pub threads_per_device: usize,
    pub policy: Policy,
    pub mode: SharingMode,
    pub timing: TimingModel,
    pub occupancy: BTreeMap<String, f64>,
    pub kernel_types: BTreeMap<String, Vec<DeviceType>>,
    /// Migrate each queue to another device after every k-th popped task.
    pub forced_migration_every: Option<u32>,
    pub quantum_ns: u64,
    pub elastic_tick_ns: u64,
    pub elastic_idle_ns: u64,
    pub record_events: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            devices: Vec::new(),
            threads_per_device: 2,
            policy: Policy::RoundRobin,
            mode: SharingMode::Shared,
            timing: TimingModel::default(),
            occupancy: BTreeMap::new(),
            kernel_types: BTreeMap::new(),
            forced_migration_every: None,
            quantum_ns: 10_000_000,
            elastic_tick_ns: 10_000_000,
            elastic_idle_ns: 50_000_000,
            record_events: true,
        }
    }
}

/// `n` identical simulated GPUs with four streams and 256 MiB each.
pub fn uniform_devices(n: usize) -> Vec<DeviceDescriptor> {
    (0..n)
        .map(|i| DeviceDescriptor::new(i, &format!("gpu{i}"), DeviceType::SimGpu))
        .collect()
}

impl ServerConfig {
    pub fn with_devices(devices: Vec<DeviceDescriptor>) -> Self {
        ServerConfig {
            devices,
            ..Default::default()
        }
    }

    pub fn clock(&self) -> ClockKind {
        self.timing.clock
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.into_config()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.devices.is_empty() {
            return Err(ConfigError::Invalid("no devices configured".into()));
        }
        if self.threads_per_device == 0 {
            return Err(ConfigError::Invalid("threads_per_device must be >= 1".into()));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.id != i {
                return Err(ConfigError::Invalid(format!(
                    "device {} has id {} at position {i}",
                    d.name, d.id
                )));
            }
            d.validate().map_err(ConfigError::Invalid)?;
        }
        for (k, occ) in &self.occupancy {
            if !(*occ > 0.0 && *occ <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "occupancy for {k} must be in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Dispatch table with the bundled library registered for every device
    /// type present (or the subset listed under `kernel_types`), with
    /// occupancy overrides applied.
    pub fn dispatch_table(&self) -> DispatchTable {
        let mut types: Vec<DeviceType> = self.devices.iter().map(|d| d.device_type).collect();
        types.sort();
        types.dedup();
        let mut table = DispatchTable::new();
        for mut k in standard_library() {
            if let Some(&occ) = self.occupancy.get(&k.name) {
                k = k.with_occupancy(occ);
            }
            let allowed = self.kernel_types.get(&k.name);
            for t in &types {
                if allowed.is_none_or(|a| a.contains(t)) {
                    table
                        .register_kernel(&k.name.clone(), *t, k.clone())
                        .expect("library kernels are unique");
                }
            }
        }
        table
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSize {
    Bytes(u64),
    Text(String),
}

pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s
        .find(|c: char| !c.is_ascii_digit() && c != '_')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num
        .replace('_', "")
        .parse()
        .map_err(|_| format!("bad size {s:?}"))?;
    let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size {s:?} overflows"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawKernelSet {
    All(String),
    List(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    name: String,
    #[serde(rename = "type")]
    device_type: String,
    #[serde(default)]
    speed_factor: f64,
    #[serde(default = "default_streams")]
    streams: usize,
    mem_capacity: RawSize,
    #[serde(default)]
    kernel_set: Option<RawKernelSet>,
    #[serde(default)]
    reload_penalty_ms: f64,
}

fn default_streams() -> usize {
    4
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTiming {
    bytes_per_us: Option<u64>,
    transfer_setup_ns: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    device: Vec<RawDevice>,
    threads_per_device: Option<usize>,
    policy: Option<Policy>,
    mode: Option<SharingMode>,
    clock: Option<ClockKind>,
    #[serde(default)]
    timing: RawTiming,
    #[serde(default)]
    occupancy: BTreeMap<String, f64>,
    #[serde(default)]
    kernel_types: BTreeMap<String, Vec<String>>,
    forced_migration_every: Option<u32>,
    quantum_ms: Option<f64>,
    elastic_tick_ms: Option<f64>,
    elastic_idle_ms: Option<f64>,
    record_events: Option<bool>,
}

fn ms(v: f64) -> u64 {
    (v * 1e6).round() as u64
}

impl RawConfig {
    fn into_config(self) -> Result<ServerConfig, ConfigError> {
        let mut cfg = ServerConfig::default();
        for (i, d) in self.device.into_iter().enumerate() {
            let device_type = d.device_type.parse().map_err(ConfigError::Invalid)?;
            let mem_capacity = match d.mem_capacity {
                RawSize::Bytes(b) => b,
                RawSize::Text(t) => parse_size(&t).map_err(ConfigError::Invalid)?,
            };
            let kernel_set = match d.kernel_set {
                None => None,
                Some(RawKernelSet::All(s)) if s == "*" => None,
                Some(RawKernelSet::All(s)) => Some(vec![s]),
                Some(RawKernelSet::List(l)) => Some(l),
            };
            cfg.devices.push(DeviceDescriptor {
                id: i,
                name: d.name,
                device_type,
                speed_factor: d.speed_factor,
                streams: d.streams,
                mem_capacity,
                kernel_set,
                reload_penalty_ns: ms(d.reload_penalty_ms),
            });
        }
        if let Some(t) = self.threads_per_device {
            cfg.threads_per_device = t;
        }
        cfg.policy = self.policy.unwrap_or_default();
        cfg.mode = self.mode.unwrap_or_default();
        cfg.timing.clock = self.clock.unwrap_or_default();
        if let Some(b) = self.timing.bytes_per_us {
            cfg.timing.bytes_per_us = b;
        }
        if let Some(s) = self.timing.transfer_setup_ns {
            cfg.timing.transfer_setup_ns = s;
        }
        cfg.occupancy = self.occupancy;
        for (k, types) in self.kernel_types {
            let parsed = types
                .iter()
                .map(|t| t.parse())
                .collect::<Result<Vec<DeviceType>, _>>()
                .map_err(ConfigError::Invalid)?;
            cfg.kernel_types.insert(k, parsed);
        }
        cfg.forced_migration_every = self.forced_migration_every.filter(|&k| k > 0);
        if let Some(q) = self.quantum_ms {
            cfg.quantum_ns = ms(q);
        }
        if let Some(t) = self.elastic_tick_ms {
            cfg.elastic_tick_ns = ms(t);
        }
        if let Some(t) = self.elastic_idle_ms {
            cfg.elastic_idle_ns = ms(t);
        }
        if let Some(r) = self.record_events {
            cfg.record_events = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64MiB"), Ok(64 << 20));
        assert_eq!(parse_size("4096"), Ok(4096));
        assert_eq!(parse_size("1 GiB"), Ok(1 << 30));
        assert!(parse_size("12 parsecs").is_err());
    }

    #[test]
    fn parse_full_config() {
        let cfg = ServerConfig::from_toml_str(
            r#"
            policy = "elastic"
            mode = "timeslice"
            clock = "virtual"
            threads_per_device = 3
            [occupancy]
            grid_relax = 1.0
            [kernel_types]
            gaussian_step = ["cpu"]
            [[device]]
            name = "cpu0"
            type = "cpu"
            mem_capacity = 1073741824
            [[device]]
            name = "fpga0"
            type = "SIM_FPGA"
            speed_factor = 0.5
            streams = 1
            mem_capacity = "64MiB"
            kernel_set = ["noop", "vec_increment"]
            reload_penalty_ms = 50
            "#,
        )
        .unwrap();
        assert_eq!(cfg.policy, Policy::Elastic);
        assert_eq!(cfg.mode, SharingMode::Timeslice);
        assert_eq!(cfg.threads_per_device, 3);
        assert_eq!(cfg.devices.len(), 2);
        assert_eq!(cfg.devices[1].mem_capacity, 64 << 20);
        assert_eq!(cfg.devices[1].reload_penalty_ns, 50_000_000);
        assert!(cfg.devices[1].supports("noop"));
        assert!(!cfg.devices[1].supports("gaussian_step"));
        let table = cfg.dispatch_table();
        assert!(table.lookup("gaussian_step", DeviceType::Cpu).is_some());
        assert!(table.lookup("gaussian_step", DeviceType::SimFpga).is_none());
        assert_eq!(table.lookup("grid_relax", DeviceType::Cpu).unwrap().occupancy, 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ServerConfig::from_toml_str("").is_err());
        assert!(ServerConfig::from_toml_str(
            "[[device]]\nname='x'\ntype='cpu'\nmem_capacity=0\n"
        )
        .is_err());
        assert!(ServerConfig::from_toml_str(
            "[[device]]\nname='x'\ntype='tpu'\nmem_capacity=1\n"
        )
        .is_err());
        assert!(ServerConfig::from_toml_str(
            "bogus = 1\n[[device]]\nname='x'\ntype='cpu'\nmem_capacity=1\n"
        )
        .is_err());
    }
}
