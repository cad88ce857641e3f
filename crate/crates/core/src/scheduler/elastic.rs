//! Elastic placement: spread a multi-queue low-priority session over idle
//! devices, and pull it back when a high-priority session needs a device
//! of its own. Pure bookkeeping; the engine performs the moves.

use std::collections::BTreeMap;

use super::{PriorityClass, RoundRobin};
use crate::backends::DeviceId;
use crate::wire::QueueId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueView {
    pub queue: QueueId,
    pub session: u32,
    pub priority: PriorityClass,
    /// Current device, or the target of a move in progress.
    pub device: DeviceId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElasticEvent {
    IdleDeviceDetected(DeviceId),
    HighPriorityArrival { session: u32 },
    HighPriorityDeparture { session: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Move {
    pub queue: QueueId,
    pub from: DeviceId,
    pub to: DeviceId,
}

#[derive(Clone, Debug)]
pub struct ElasticPolicy {
    n_devices: usize,
    expansions: Vec<Move>,
    reserved: BTreeMap<DeviceId, u32>,
    home: BTreeMap<u32, DeviceId>,
}

impl ElasticPolicy {
    pub fn new(n_devices: usize) -> Self {
        ElasticPolicy {
            n_devices,
            expansions: Vec::new(),
            reserved: BTreeMap::new(),
            home: BTreeMap::new(),
        }
    }

    pub fn reserved_for(&self, d: DeviceId) -> Option<u32> {
        self.reserved.get(&d).copied()
    }

    pub fn reservation_of(&self, session: u32) -> Option<DeviceId> {
        self.reserved
            .iter()
            .find(|(_, s)| **s == session)
            .map(|(d, _)| *d)
    }

    pub fn home_of(&self, session: u32) -> Option<DeviceId> {
        self.home.get(&session).copied()
    }

    /// Initial device for a new queue of `session`.
    pub fn place(
        &mut self,
        session: u32,
        candidates: &[DeviceId],
        rr: &mut RoundRobin,
    ) -> Option<DeviceId> {
        if let Some(d) = self.reservation_of(session) {
            if candidates.contains(&d) {
                return Some(d);
            }
        }
        let open: Vec<DeviceId> = candidates
            .iter()
            .copied()
            .filter(|d| self.reserved_for(*d).is_none_or(|s| s == session))
            .collect();
        let pool = if open.is_empty() { candidates } else { &open[..] };
        if let Some(h) = self.home.get(&session) {
            if pool.contains(h) {
                return Some(*h);
            }
        }
        let d = rr.select(pool, self.n_devices)?;
        self.home.entry(session).or_insert(d);
        Some(d)
    }

    /// Drops bookkeeping for a released queue.
    pub fn forget_queue(&mut self, q: QueueId) {
        self.expansions.retain(|m| m.queue != q);
    }

    pub fn forget_session(&mut self, session: u32) {
        self.home.remove(&session);
    }

    pub fn rebalance(&mut self, event: ElasticEvent, view: &[QueueView]) -> Vec<Move> {
        if self.n_devices < 2 {
            return Vec::new();
        }
        match event {
            ElasticEvent::IdleDeviceDetected(d) => self.expand(d, view),
            ElasticEvent::HighPriorityArrival { session } => self.shrink(session, view),
            ElasticEvent::HighPriorityDeparture { session } => {
                self.reserved.retain(|_, s| *s != session);
                Vec::new()
            }
        }
    }

    fn expand(&mut self, idle: DeviceId, view: &[QueueView]) -> Vec<Move> {
        if self.reserved.contains_key(&idle) || view.iter().any(|v| v.device == idle) {
            return Vec::new();
        }
        let mut groups: BTreeMap<(u32, DeviceId), Vec<QueueId>> = BTreeMap::new();
        for v in view {
            if v.priority == PriorityClass::Low && !self.reserved.contains_key(&v.device) {
                groups.entry((v.session, v.device)).or_default().push(v.queue);
            }
        }
        let best = groups
            .iter()
            .filter(|(_, qs)| qs.len() >= 2)
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)));
        let Some((&(_, from), qs)) = best else {
            return Vec::new();
        };
        let queue = *qs.iter().max_by_key(|q| q.index()).unwrap();
        let m = Move {
            queue,
            from,
            to: idle,
        };
        self.expansions.push(m);
        vec![m]
    }

    fn shrink(&mut self, session: u32, view: &[QueueView]) -> Vec<Move> {
        if self.reservation_of(session).is_some() {
            return Vec::new();
        }
        let open: Vec<DeviceId> = (0..self.n_devices)
            .filter(|d| !self.reserved.contains_key(d))
            .collect();
        if open.len() < 2 {
            return Vec::new();
        }
        let low_on = |d: DeviceId| {
            view.iter()
                .filter(|v| v.device == d && v.session != session)
                .count()
        };
        let lifo = self
            .expansions
            .iter()
            .rev()
            .map(|m| m.to)
            .find(|d| open.contains(d));
        let target = lifo.unwrap_or_else(|| {
            *open
                .iter()
                .min_by(|a, b| low_on(**a).cmp(&low_on(**b)).then(b.cmp(a)))
                .unwrap()
        });
        self.reserved.insert(target, session);
        self.expansions.retain(|m| m.to != target);

        let mut load: BTreeMap<DeviceId, usize> = open
            .iter()
            .filter(|d| **d != target)
            .map(|d| (*d, low_on(*d)))
            .collect();
        let mut moves = Vec::new();
        let mut displaced: Vec<&QueueView> = view
            .iter()
            .filter(|v| v.device == target && v.session != session)
            .collect();
        displaced.sort_by_key(|v| v.queue.index());
        for v in displaced {
            let home = self
                .home
                .get(&v.session)
                .copied()
                .filter(|h| load.contains_key(h));
            let to = home.unwrap_or_else(|| {
                *load
                    .iter()
                    .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
                    .unwrap()
                    .0
            });
            *load.get_mut(&to).unwrap() += 1;
            moves.push(Move {
                queue: v.queue,
                from: target,
                to,
            });
        }
        moves
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(i: u32) -> QueueId {
        QueueId::new(i, 1)
    }

    fn low(i: u32, d: DeviceId) -> QueueView {
        QueueView {
            queue: q(i),
            session: 1,
            priority: PriorityClass::Low,
            device: d,
        }
    }

    #[test]
    fn expand_then_shrink_follows_narrative() {
        let mut p = ElasticPolicy::new(2);
        let mut rr = RoundRobin::new();
        assert_eq!(p.place(1, &[0, 1], &mut rr), Some(0));
        assert_eq!(p.place(1, &[0, 1], &mut rr), Some(0));
        let view = [low(0, 0), low(1, 0)];
        let moves = p.rebalance(ElasticEvent::IdleDeviceDetected(1), &view);
        assert_eq!(moves, vec![Move { queue: q(1), from: 0, to: 1 }]);

        let view = [low(0, 0), low(1, 1)];
        let moves = p.rebalance(ElasticEvent::HighPriorityArrival { session: 2 }, &view);
        assert_eq!(moves, vec![Move { queue: q(1), from: 1, to: 0 }]);
        assert_eq!(p.reserved_for(1), Some(2));
        assert_eq!(p.place(2, &[0, 1], &mut rr), Some(1));
        // low sessions never land on the reserved device
        assert_eq!(p.place(3, &[0, 1], &mut rr), Some(0));
        // reserved device is not an expansion target
        let view = [low(0, 0), low(1, 0)];
        assert!(p.rebalance(ElasticEvent::IdleDeviceDetected(1), &view).is_empty());

        p.rebalance(ElasticEvent::HighPriorityDeparture { session: 2 }, &[]);
        assert_eq!(p.reserved_for(1), None);
        assert_eq!(p.rebalance(ElasticEvent::IdleDeviceDetected(1), &view).len(), 1);
    }

    #[test]
    fn single_device_plans_are_empty() {
        let mut p = ElasticPolicy::new(1);
        let view = [low(0, 0), low(1, 0)];
        assert!(p.rebalance(ElasticEvent::IdleDeviceDetected(0), &view).is_empty());
        assert!(p
            .rebalance(ElasticEvent::HighPriorityArrival { session: 9 }, &view)
            .is_empty());
    }

    #[test]
    fn no_expansion_for_single_queue_sessions_or_busy_devices() {
        let mut p = ElasticPolicy::new(2);
        assert!(p.rebalance(ElasticEvent::IdleDeviceDetected(1), &[low(0, 0)]).is_empty());
        let view = [low(0, 0), low(1, 0), low(2, 1)];
        assert!(p.rebalance(ElasticEvent::IdleDeviceDetected(1), &view).is_empty());
    }

    #[test]
    fn shrink_picks_least_loaded_without_expansions() {
        let mut p = ElasticPolicy::new(3);
        let view = [low(0, 0), low(1, 0), low(2, 1)];
        let moves = p.rebalance(ElasticEvent::HighPriorityArrival { session: 5 }, &view);
        assert!(moves.is_empty());
        assert_eq!(p.reserved_for(2), Some(5));
    }
}
