//! Linearizability checking for concurrent set histories.
//!
//! A set of keys is a product of independent per-key booleans, and
//! linearizability is compositional, so each key's sub-history is checked on
//! its own with a memoized depth-first search over linearization prefixes.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOp {
    Insert,
    Remove,
    Contains,
}

impl SetOp {
    /// Result and next membership for this operation applied to `present`.
    fn apply(self, present: bool) -> (bool, bool) {
        match self {
            SetOp::Insert => (!present, true),
            SetOp::Remove => (present, false),
            SetOp::Contains => (present, present),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub thread: usize,
    pub op: SetOp,
    pub key: u64,
    pub result: bool,
    pub invoked: u64,
    pub returned: u64,
}

/// Hands out logical timestamps for invocations and responses.
#[derive(Debug, Default)]
pub struct Clock(AtomicU64);

impl Clock {
    pub fn tick(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }

    /// Time `f` and record it as an event.
    pub fn record(&self, thread: usize, op: SetOp, key: u64, f: impl FnOnce() -> bool) -> Event {
        let invoked = self.tick();
        let result = f();
        let returned = self.tick();
        Event { thread, op, key, result, invoked, returned }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: u64,
    pub events: Vec<Event>,
}

/// Check `history` against a set that initially holds `initial`.
pub fn check(history: &[Event], initial: &[u64]) -> Result<(), Violation> {
    let mut by_key: BTreeMap<u64, Vec<Event>> = BTreeMap::new();
    for e in history {
        by_key.entry(e.key).or_default().push(*e);
    }
    for (key, events) in by_key {
        if !linearizable(&events, initial.contains(&key)) {
            return Err(Violation { key, events });
        }
    }
    Ok(())
}

/// Whether one key's events admit a legal sequential order.
///
/// # Panics
/// With more than 64 events for the key.
pub fn linearizable(events: &[Event], initial: bool) -> bool {
    assert!(events.len() <= 64, "per-key history too long for the bitmask search");
    let mut seen = HashSet::new();
    search(events, 0, initial, &mut seen)
}

fn search(events: &[Event], done: u64, present: bool, seen: &mut HashSet<(u64, bool)>) -> bool {
    let n = events.len();
    if done.count_ones() as usize == n {
        return true;
    }
    if !seen.insert((done, present)) {
        return false;
    }
    let pending = || (0..n).filter(move |&i| done & (1 << i) == 0);
    // Only an op invoked before every pending op has returned can go next.
    let horizon = pending().map(|i| events[i].returned).min().unwrap();
    for i in pending() {
        let e = &events[i];
        if e.invoked > horizon {
            continue;
        }
        let (result, next) = e.op.apply(present);
        if result == e.result && search(events, done | (1 << i), next, seen) {
            return true;
        }
    }
    false
}
