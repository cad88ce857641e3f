//! Queue placement: round-robin selection, the elastic policy and live
//! migration of queues between devices.

mod elastic;

use std::fmt;
use std::str::FromStr;

use crate::backends::DeviceId;
use crate::wire::{BufferId, QueueId};

pub use elastic::{ElasticEvent, ElasticPolicy, Move, QueueView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum PriorityClass {
    #[default]
    Low,
    High,
}

impl PriorityClass {
    pub const fn code(self) -> u32 {
        match self {
            PriorityClass::Low => 0,
            PriorityClass::High => 1,
        }
    }

    pub const fn from_code(v: u32) -> Self {
        if v == 1 {
            PriorityClass::High
        } else {
            PriorityClass::Low
        }
    }
}

impl FromStr for PriorityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(PriorityClass::High),
            "low" => Ok(PriorityClass::Low),
            other => Err(format!("unknown priority {other:?} (expected high or low)")),
        }
    }
}

impl fmt::Display for PriorityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorityClass::Low => "low",
            PriorityClass::High => "high",
        })
    }
}

/// Where a queue is consumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Unassigned,
    Assigned { device: DeviceId, worker: usize },
    /// No consumer; waiting for its launched tasks to drain before moving.
    Orphan { from: DeviceId, to: DeviceId },
    Released,
}

impl Assignment {
    pub fn device(&self) -> Option<DeviceId> {
        match *self {
            Assignment::Assigned { device, .. } => Some(device),
            _ => None,
        }
    }
}

/// Rotating device selection restricted to a feasible subset.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next device at or after the rotation pointer among `candidates`
    /// (ids `< n_devices`); advances the pointer past the chosen device.
    pub fn select(&mut self, candidates: &[DeviceId], n_devices: usize) -> Option<DeviceId> {
        if candidates.is_empty() || n_devices == 0 {
            return None;
        }
        let chosen = (0..n_devices)
            .map(|i| (self.next + i) % n_devices)
            .find(|d| candidates.contains(d))?;
        self.next = (chosen + 1) % n_devices;
        Some(chosen)
    }
}

/// A queue move: the queue plus exactly the ledger buffers bound to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MigrationPlan {
    pub queue: QueueId,
    pub source: DeviceId,
    pub target: DeviceId,
    pub manifest: Vec<(BufferId, u64)>,
}

impl MigrationPlan {
    pub fn bytes(&self) -> u64 {
        self.manifest.iter().map(|(_, s)| s).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_alternates() {
        let mut rr = RoundRobin::new();
        let all = [0, 1];
        let picks: Vec<_> = (0..4).map(|_| rr.select(&all, 2).unwrap()).collect();
        assert_eq!(picks, vec![0, 1, 0, 1]);
    }

    #[test]
    fn feasibility_filter_wins() {
        let mut rr = RoundRobin::new();
        for _ in 0..3 {
            assert_eq!(rr.select(&[1], 2), Some(1));
        }
        assert_eq!(rr.select(&[], 2), None);
    }

    #[test]
    fn thousand_queues_balanced() {
        let mut rr = RoundRobin::new();
        let mut counts = [0usize; 3];
        for _ in 0..1000 {
            counts[rr.select(&[0, 1, 2], 3).unwrap()] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn priority_parse() {
        assert_eq!("HIGH".parse::<PriorityClass>(), Ok(PriorityClass::High));
        assert!("medium".parse::<PriorityClass>().is_err());
        assert_eq!(PriorityClass::from_code(PriorityClass::High.code()), PriorityClass::High);
    }
}
