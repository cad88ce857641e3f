//! Per-device occupancy timeline.
//!
//! Launches are booked non-preemptively: a launch on stream `s` starts no
//! earlier than the end of the previous launch on `s`, and only at an
//! instant where the summed occupancy of everything running stays ≤ 1.

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Booking {
    pub start: u64,
    pub end: u64,
    pub occupancy: f64,
    pub stream: usize,
}

#[derive(Clone, Debug)]
pub struct Timeline {
    stream_end: Vec<u64>,
    active: Vec<Booking>,
}

impl Timeline {
    pub fn new(streams: usize) -> Self {
        assert!(streams >= 1);
        Timeline {
            stream_end: vec![0; streams],
            active: Vec::new(),
        }
    }

    pub fn streams(&self) -> usize {
        self.stream_end.len()
    }

    /// Drops bookings that ended at or before `now`.
    pub fn retire(&mut self, now: u64) {
        self.active.retain(|b| b.end > now);
    }

    fn load_at(&self, t: u64) -> f64 {
        self.active
            .iter()
            .filter(|b| b.start <= t && t < b.end)
            .map(|b| b.occupancy)
            .sum()
    }

    fn fits(&self, start: u64, dur: u64, occ: f64) -> bool {
        if occ <= 0.0 {
            return true;
        }
        let end = start + dur.max(1);
        if self.load_at(start) + occ > 1.0 + EPS {
            return false;
        }
        self.active
            .iter()
            .filter(|b| b.start > start && b.start < end)
            .all(|b| self.load_at(b.start) + occ <= 1.0 + EPS)
    }

    /// Earliest feasible start at or after `ready`; records the booking.
    pub fn book(&mut self, stream: usize, ready: u64, dur: u64, occupancy: f64) -> Booking {
        let occupancy = occupancy.clamp(0.0, 1.0);
        let t0 = ready.max(self.stream_end[stream]);
        let mut candidates: Vec<u64> = std::iter::once(t0)
            .chain(self.active.iter().map(|b| b.end).filter(|&e| e > t0))
            .collect();
        candidates.sort_unstable();
        let start = candidates
            .into_iter()
            .find(|&c| self.fits(c, dur, occupancy))
            .unwrap_or_else(|| self.active.iter().map(|b| b.end).max().unwrap_or(t0).max(t0));
        let b = Booking {
            start,
            end: start + dur,
            occupancy,
            stream,
        };
        self.stream_end[stream] = b.end;
        if dur > 0 {
            self.active.push(b);
        }
        b
    }

    /// Latest end over all booked launches.
    pub fn horizon(&self) -> u64 {
        self.stream_end.iter().copied().max().unwrap_or(0)
    }

    pub fn bookings(&self) -> &[Booking] {
        &self.active
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quarter_occupancy_overlaps() {
        let mut t = Timeline::new(2);
        let a = t.book(0, 0, 1000, 0.25);
        let b = t.book(1, 0, 1000, 0.25);
        assert_eq!((a.start, b.start), (0, 0));
        assert_eq!(a.end.max(b.end), 1000);
    }

    #[test]
    fn full_occupancy_serializes() {
        let mut t = Timeline::new(2);
        t.book(0, 0, 1000, 1.0);
        let b = t.book(1, 0, 1000, 1.0);
        assert_eq!((b.start, b.end), (1000, 2000));
    }

    #[test]
    fn same_stream_is_fifo() {
        let mut t = Timeline::new(1);
        let a = t.book(0, 0, 500, 0.1);
        let b = t.book(0, 0, 10, 0.1);
        assert!(b.start >= a.end);
    }

    #[test]
    fn zero_occupancy_never_waits_for_others() {
        let mut t = Timeline::new(2);
        t.book(0, 0, 1000, 1.0);
        let b = t.book(1, 5, 100, 0.0);
        assert_eq!(b.start, 5);
    }

    proptest! {
        #[test]
        fn occupancy_law_and_stream_order(
            launches in proptest::collection::vec((0usize..4, 0u64..2000, 1u64..500, 1u32..=4), 1..60)
        ) {
            let mut t = Timeline::new(4);
            let mut all = Vec::new();
            let mut last_end = [0u64; 4];
            for (s, ready, dur, q) in launches {
                let b = t.book(s, ready, dur, q as f64 * 0.25);
                prop_assert!(b.start >= ready);
                prop_assert!(b.start >= last_end[s]);
                last_end[s] = b.end;
                all.push(b);
            }
            // every booking start is a point where the load could first rise
            for p in &all {
                let load: f64 = all
                    .iter()
                    .filter(|b| b.start <= p.start && p.start < b.end)
                    .map(|b| b.occupancy)
                    .sum();
                prop_assert!(load <= 1.0 + 1e-6, "load {} at {}", load, p.start);
            }
        }
    }
}
