//! Run metrics and their CSV form.
//!
//! One row per instance (`kind = instance`), one per transfer probe
//! (`kind = transfer`) and a closing `summary` row. List-valued fields are
//! `;`-separated. Metrics with nothing in them are written as the header
//! alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstanceMetrics {
    pub name: String,
    pub priority: String,
    pub queues: u32,
    pub tasks: u64,
    pub start_ns: u64,
    pub end_ns: u64,
    /// FNV-1a over every downloaded byte, queue by queue.
    pub digest: u64,
}

impl InstanceMetrics {
    pub fn turnaround_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferSample {
    pub bytes: u64,
    /// Median of staged uploads: client copy into shared memory, then the
    /// server's copy into device memory.
    pub staged_ns: u64,
    /// Median of one plain copy of the same bytes.
    pub direct_ns: u64,
}

impl TransferSample {
    pub fn ratio(&self) -> f64 {
        self.staged_ns as f64 / self.direct_ns.max(1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub workload: String,
    pub clock: String,
    pub mode: String,
    pub instances: Vec<InstanceMetrics>,
    pub makespan_ns: u64,
    pub tasks: u64,
    pub device_busy_ns: Vec<u64>,
    pub migrations: u64,
    pub bytes_moved: u64,
    /// Wall time of each compute-task issue call.
    pub issue_ns: Vec<u64>,
    pub transfers: Vec<TransferSample>,
    pub wall_ns: u64,
}

impl Metrics {
    pub fn is_empty(&self) -> bool {
        *self == Metrics::default()
    }

    /// The fields a virtual-clock run must reproduce exactly.
    pub fn without_wall_clock(&self) -> Metrics {
        Metrics {
            issue_ns: Vec::new(),
            transfers: Vec::new(),
            wall_ns: 0,
            ..self.clone()
        }
    }

    pub fn instance(&self, name: &str) -> Option<&InstanceMetrics> {
        self.instances.iter().find(|i| i.name == name)
    }

    pub fn median_issue_ns(&self) -> Option<u64> {
        median(&self.issue_ns)
    }
}

pub fn median(v: &[u64]) -> Option<u64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    Some(s[s.len() / 2])
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Row {
    kind: String,
    name: String,
    priority: String,
    queues: String,
    tasks: String,
    start_ns: String,
    end_ns: String,
    turnaround_ns: String,
    digest: String,
    bytes: String,
    staged_ns: String,
    direct_ns: String,
    staged_direct_ratio: String,
    makespan_ns: String,
    device_busy_ns: String,
    migrations: String,
    bytes_moved: String,
    issue_ns: String,
    wall_ns: String,
    clock: String,
    mode: String,
}

const HEADER: [&str; 21] = [
    "kind", "name", "priority", "queues", "tasks", "start_ns", "end_ns", "turnaround_ns", "digest",
    "bytes", "staged_ns", "direct_ns", "staged_direct_ratio", "makespan_ns", "device_busy_ns",
    "migrations", "bytes_moved", "issue_ns", "wall_ns", "clock", "mode",
];

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<u64>, CsvError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(num).collect()
}

fn num(s: &str) -> Result<u64, CsvError> {
    s.parse().map_err(|_| CsvError::Field(s.to_string()))
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad field {0:?}")]
    Field(String),
    #[error("unexpected row kind {0:?}")]
    Kind(String),
}

pub fn to_csv(m: &Metrics) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if m.is_empty() {
        w.write_record(HEADER).unwrap();
    }
    for i in &m.instances {
        w.serialize(Row {
            kind: "instance".into(),
            name: i.name.clone(),
            priority: i.priority.clone(),
            queues: i.queues.to_string(),
            tasks: i.tasks.to_string(),
            start_ns: i.start_ns.to_string(),
            end_ns: i.end_ns.to_string(),
            turnaround_ns: i.turnaround_ns().to_string(),
            digest: format!("{:016x}", i.digest),
            ..Row::default()
        })
        .unwrap();
    }
    for t in &m.transfers {
        w.serialize(Row {
            kind: "transfer".into(),
            bytes: t.bytes.to_string(),
            staged_ns: t.staged_ns.to_string(),
            direct_ns: t.direct_ns.to_string(),
            staged_direct_ratio: format!("{:.4}", t.ratio()),
            ..Row::default()
        })
        .unwrap();
    }
    if !m.is_empty() {
        w.serialize(Row {
            kind: "summary".into(),
            name: m.workload.clone(),
            tasks: m.tasks.to_string(),
            makespan_ns: m.makespan_ns.to_string(),
            device_busy_ns: join(&m.device_busy_ns),
            migrations: m.migrations.to_string(),
            bytes_moved: m.bytes_moved.to_string(),
            issue_ns: join(&m.issue_ns),
            wall_ns: m.wall_ns.to_string(),
            clock: m.clock.clone(),
            mode: m.mode.clone(),
            ..Row::default()
        })
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn from_csv(text: &str) -> Result<Metrics, CsvError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut m = Metrics::default();
    for row in r.deserialize() {
        let row: Row = row?;
        match row.kind.as_str() {
            "instance" => m.instances.push(InstanceMetrics {
                name: row.name,
                priority: row.priority,
                queues: num(&row.queues)? as u32,
                tasks: num(&row.tasks)?,
                start_ns: num(&row.start_ns)?,
                end_ns: num(&row.end_ns)?,
                digest: u64::from_str_radix(&row.digest, 16).map_err(|_| CsvError::Field(row.digest))?,
            }),
            "transfer" => m.transfers.push(TransferSample {
                bytes: num(&row.bytes)?,
                staged_ns: num(&row.staged_ns)?,
                direct_ns: num(&row.direct_ns)?,
            }),
            "summary" => {
                m.workload = row.name;
                m.tasks = num(&row.tasks)?;
                m.makespan_ns = num(&row.makespan_ns)?;
                m.device_busy_ns = split(&row.device_busy_ns)?;
                m.migrations = num(&row.migrations)?;
                m.bytes_moved = num(&row.bytes_moved)?;
                m.issue_ns = split(&row.issue_ns)?;
                m.wall_ns = num(&row.wall_ns)?;
                m.clock = row.clock;
                m.mode = row.mode;
            }
            other => return Err(CsvError::Kind(other.to_string())),
        }
    }
    Ok(m)
}

/// Writes `m` as CSV to `path`.
pub fn report(m: &Metrics, path: impl AsRef<Path>) -> Result<(), CsvError> {
    std::fs::write(path, to_csv(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_metrics_is_header_only() {
        let text = to_csv(&Metrics::default());
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end(), HEADER.join(","));
        assert_eq!(from_csv(&text).unwrap(), Metrics::default());
    }

    #[test]
    fn rows_use_the_header_order() {
        let m = Metrics {
            workload: "w".into(),
            instances: vec![InstanceMetrics {
                name: "a".into(),
                end_ns: 5,
                ..Default::default()
            }],
            ..Default::default()
        };
        let text = to_csv(&m);
        assert!(text.starts_with(&HEADER.join(",")));
        assert_eq!(text.lines().count(), 3);
    }
}
