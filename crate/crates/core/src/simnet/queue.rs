//! The event queue: an integer microsecond clock and a heap ordered by
//! `(time, sequence number)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::ids::NodeId;

/// Simulated time in microseconds.
pub type Micros = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at}µs but the clock already reads {now}µs")]
    PastEvent { at: Micros, now: Micros },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event<P> {
    pub time: Micros,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

// Min-heap on (time, seq); the payload never takes part in ordering.
struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

pub struct EventQueue<P> {
    now: Micros,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        EventQueue { now: 0, next_seq: 0, heap: BinaryHeap::new() }
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Queue an event and return its sequence number.
    pub fn schedule(&mut self, time: Micros, target: NodeId, payload: P) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::PastEvent { at: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { time, seq, target, payload }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|e| e.0.time)
    }

    /// Fire the next event if it is due at or before `limit`.
    pub fn pop_until(&mut self, limit: Micros) -> Option<Event<P>> {
        if self.peek_time()? > limit {
            return None;
        }
        let ev = self.heap.pop()?.0;
        self.now = ev.time;
        Some(ev)
    }

    /// Fire everything due at or before `t`, then move the clock to `t`.
    pub fn run_until(&mut self, t: Micros) -> Vec<Event<P>> {
        let mut fired = Vec::new();
        while let Some(ev) = self.pop_until(t) {
            fired.push(ev);
        }
        self.now = self.now.max(t);
        fired
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_fire_in_sequence_order() {
        let mut q = EventQueue::new();
        q.schedule(5, NodeId(0), "b").unwrap();
        q.schedule(5, NodeId(1), "c").unwrap();
        q.schedule(2, NodeId(0), "a").unwrap();
        let fired: Vec<_> = q.run_until(10).into_iter().map(|e| e.payload).collect();
        assert_eq!(fired, vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.run_until(1_000).is_empty());
        assert_eq!(q.now(), 1_000);
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut q = EventQueue::new();
        q.run_until(50);
        assert_eq!(q.schedule(49, NodeId(0), ()), Err(SimError::PastEvent { at: 49, now: 50 }));
        assert!(q.schedule(50, NodeId(0), ()).is_ok());
    }

    #[test]
    fn events_beyond_limit_stay_queued() {
        let mut q = EventQueue::new();
        q.schedule(10, NodeId(0), 1).unwrap();
        q.schedule(20, NodeId(0), 2).unwrap();
        assert_eq!(q.run_until(15).len(), 1);
        assert_eq!(q.len(), 1);
        assert_eq!(q.now(), 15);
    }
}
