use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::{AppId, ServerId, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { app: AppId },
    Completion { task: TaskId, server: ServerId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub at_ms: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed so the max-heap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other.at_ms.total_cmp(&self.at_ms).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Simulation time plus a queue of pending events with a total
/// `(time, sequence)` order.
#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now_ms: f64,
    next_seq: u64,
    queue: BinaryHeap<Event>,
}

impl SimClock {
    pub fn new(now_ms: f64) -> Self {
        Self { now_ms, ..Default::default() }
    }

    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn schedule(&mut self, at_ms: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { at_ms, seq, kind });
        seq
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|e| e.at_ms)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Pops the earliest event due at or before `until_ms`, moving the clock
    /// to its time.
    pub fn pop_due(&mut self, until_ms: f64) -> Option<Event> {
        if self.queue.peek()?.at_ms > until_ms {
            return None;
        }
        let e = self.queue.pop()?;
        self.now_ms = self.now_ms.max(e.at_ms);
        Some(e)
    }

    pub fn set_now(&mut self, t_ms: f64) {
        self.now_ms = self.now_ms.max(t_ms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_sequence_order() {
        let mut c = SimClock::new(0.0);
        c.schedule(5.0, EventKind::Arrival { app: 0 });
        c.schedule(1.0, EventKind::Arrival { app: 1 });
        c.schedule(5.0, EventKind::Arrival { app: 2 });
        c.schedule(3.0, EventKind::Completion { task: 9, server: 0 });
        let mut got = Vec::new();
        while let Some(e) = c.pop_due(f64::INFINITY) {
            got.push((e.at_ms, e.seq));
        }
        assert_eq!(got, vec![(1.0, 1), (3.0, 3), (5.0, 0), (5.0, 2)]);
        assert_eq!(c.now_ms(), 5.0);
    }

    #[test]
    fn pop_due_respects_horizon() {
        let mut c = SimClock::new(0.0);
        c.schedule(10.0, EventKind::Arrival { app: 0 });
        assert!(c.pop_due(9.0).is_none());
        c.set_now(9.0);
        assert_eq!(c.now_ms(), 9.0);
        assert!(c.pop_due(10.0).is_some());
    }
}
