//! Time-ordered event queue with insertion-order tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Radio {
    Rf,
    Bcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    PacketArrival,
    BackoffExpiry(Radio),
    CcaResult(Radio),
    /// End of the frame (RF data frame, or a whole BCC exchange).
    TxEnd(Radio),
    /// End of the RF acknowledgment window.
    AckTimeout,
    EstTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub node: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind, node: usize) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind, node });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        for node in 0..5 {
            q.schedule(1.0, EventKind::EstTick, node);
        }
        q.schedule(0.5, EventKind::PacketArrival, 9);
        assert_eq!(q.pop().unwrap().node, 9);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.node).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn pops_sorted_by_time_then_seq(times in proptest::collection::vec(0u8..20, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.schedule(*t as f64, EventKind::PacketArrival, i);
            }
            let mut last = (f64::NEG_INFINITY, 0u64);
            while let Some(e) = q.pop() {
                prop_assert!(e.time > last.0 || (e.time == last.0 && e.seq > last.1));
                last = (e.time, e.seq);
            }
        }
    }
}
