//! Optimistic skip list whose per-node locks are replaced by one range lock
//! over the key space.
//!
//! An update locks the keys from its highest-level predecessor up to the
//! target: `[pred, key + 1)` for insert and `[pred, key + 2)` for remove.
//! The head sentinel takes part as key 0. Searches take no locks.

use std::cell::RefCell;
use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};
use std::sync::Mutex;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::range::Range;
use crate::stats::{self, Counter};
use crate::wait::{wait_until, WaitPolicy};
use crate::RangeLocking;

pub const MAX_LEVEL: usize = 20;

/// Largest storable key; remove's range must end at `key + 2`.
pub const MAX_KEY: u64 = u64::MAX - 2;

struct SkipNode {
    key: u64,
    top: usize,
    sentinel: Sentinel,
    next: Box<[AtomicPtr<SkipNode>]>,
    marked: AtomicBool,
    fully_linked: AtomicBool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Sentinel {
    None,
    Head,
    Tail,
}

impl SkipNode {
    fn new(key: u64, top: usize, sentinel: Sentinel) -> *mut SkipNode {
        let next = (0..=top).map(|_| AtomicPtr::new(ptr::null_mut())).collect();
        Box::into_raw(Box::new(SkipNode {
            key,
            top,
            sentinel,
            next,
            marked: AtomicBool::new(false),
            fully_linked: AtomicBool::new(false),
        }))
    }

    /// Strictly below `key` in list order.
    fn less(&self, key: u64) -> bool {
        match self.sentinel {
            Sentinel::Head => true,
            Sentinel::Tail => false,
            Sentinel::None => self.key < key,
        }
    }

    fn is(&self, key: u64) -> bool {
        self.sentinel == Sentinel::None && self.key == key
    }

    /// Coordinate of this node in the lock's key space.
    fn lock_key(&self) -> u64 {
        match self.sentinel {
            Sentinel::Head => 0,
            _ => self.key,
        }
    }

    fn next(&self, level: usize) -> *mut SkipNode {
        self.next[level].load(Ordering::Acquire)
    }
}

thread_local! {
    static LEVEL_RNG: RefCell<SmallRng> = RefCell::new(SmallRng::from_entropy());
}

fn random_level() -> usize {
    LEVEL_RNG.with(|r| {
        let bits: u32 = r.borrow_mut().gen();
        (bits.trailing_ones() as usize).min(MAX_LEVEL - 1)
    })
}

/// Concurrent ordered set of `u64` keys in `0..=MAX_KEY`.
pub struct RangeSkipList<L> {
    head: *mut SkipNode,
    tail: *mut SkipNode,
    lock: L,
    retired: Mutex<Vec<usize>>,
    wait: WaitPolicy,
}

unsafe impl<L: Send> Send for RangeSkipList<L> {}
unsafe impl<L: Sync> Sync for RangeSkipList<L> {}

type Preds = [*mut SkipNode; MAX_LEVEL];

/// Heap bytes of a node with `levels` forward links, header plus link array.
pub fn node_bytes(levels: usize) -> usize {
    std::mem::size_of::<SkipNode>() + levels * std::mem::size_of::<AtomicPtr<SkipNode>>()
}

impl<L: RangeLocking> RangeSkipList<L> {
    pub fn new(lock: L) -> Self {
        let head = SkipNode::new(0, MAX_LEVEL - 1, Sentinel::Head);
        let tail = SkipNode::new(u64::MAX, MAX_LEVEL - 1, Sentinel::Tail);
        unsafe {
            for l in 0..MAX_LEVEL {
                (*head).next[l].store(tail, Ordering::Relaxed);
            }
            (*head).fully_linked.store(true, Ordering::Relaxed);
            (*tail).fully_linked.store(true, Ordering::Relaxed);
        }
        RangeSkipList { head, tail, lock, retired: Mutex::new(Vec::new()), wait: WaitPolicy::default() }
    }

    pub fn lock(&self) -> &L {
        &self.lock
    }

    /// Fill `preds`/`succs` at every level; returns the highest level at which
    /// `key` was found.
    fn find(&self, key: u64, preds: &mut Preds, succs: &mut Preds) -> Option<usize> {
        let mut found = None;
        let mut pred = self.head;
        for level in (0..MAX_LEVEL).rev() {
            let mut cur = unsafe { (*pred).next(level) };
            while unsafe { (*cur).less(key) } {
                pred = cur;
                cur = unsafe { (*pred).next(level) };
            }
            if found.is_none() && unsafe { (*cur).is(key) } {
                found = Some(level);
            }
            preds[level] = pred;
            succs[level] = cur;
        }
        found
    }

    fn lock_keys(&self, from: &SkipNode, end: u64) -> L::Guard<'_> {
        stats::bump(Counter::SkipListLock);
        let range = Range::write(from.lock_key(), end).expect("predecessor precedes key");
        self.lock.lock_range(&range)
    }

    pub fn contains(&self, key: u64) -> bool {
        assert!(key <= MAX_KEY, "key {key} outside the key space");
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        match self.find(key, &mut preds, &mut succs) {
            Some(l) => {
                let n = unsafe { &*succs[l] };
                n.fully_linked.load(Ordering::Acquire) && !n.marked.load(Ordering::Acquire)
            }
            None => false,
        }
    }

    /// Insert `key`; false if it was already present.
    #[allow(clippy::needless_range_loop)]
    pub fn insert(&self, key: u64) -> bool {
        assert!(key <= MAX_KEY, "key {key} outside the key space");
        let top = random_level();
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        loop {
            if let Some(l) = self.find(key, &mut preds, &mut succs) {
                let n = unsafe { &*succs[l] };
                if !n.marked.load(Ordering::Acquire) {
                    wait_until(self.wait, || n.fully_linked.load(Ordering::Acquire));
                    return false;
                }
                continue;
            }
            let _g = self.lock_keys(unsafe { &*preds[top] }, key + 1);
            let valid = (0..=top).all(|l| unsafe {
                let (p, s) = (&*preds[l], &*succs[l]);
                !p.marked.load(Ordering::Acquire)
                    && !s.marked.load(Ordering::Acquire)
                    && p.next(l) == succs[l]
            });
            if !valid {
                continue;
            }
            let node = SkipNode::new(key, top, Sentinel::None);
            unsafe {
                for l in 0..=top {
                    (*node).next[l].store(succs[l], Ordering::Relaxed);
                }
                for l in 0..=top {
                    (*preds[l]).next[l].store(node, Ordering::Release);
                }
                (*node).fully_linked.store(true, Ordering::Release);
            }
            return true;
        }
    }

    /// Remove `key`; false if it was absent.
    pub fn remove(&self, key: u64) -> bool {
        assert!(key <= MAX_KEY, "key {key} outside the key space");
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        loop {
            let Some(l) = self.find(key, &mut preds, &mut succs) else { return false };
            let victim = succs[l];
            let v = unsafe { &*victim };
            // A node that is not fully linked has not been inserted yet.
            if !v.fully_linked.load(Ordering::Acquire) || v.top != l || v.marked.load(Ordering::Acquire) {
                return false;
            }
            let top = v.top;
            let _g = self.lock_keys(unsafe { &*preds[top] }, key + 2);
            if v.marked.load(Ordering::Acquire) {
                return false;
            }
            let valid = (0..=top).all(|l| unsafe {
                let p = &*preds[l];
                !p.marked.load(Ordering::Acquire) && p.next(l) == victim
            });
            if !valid {
                continue;
            }
            v.marked.store(true, Ordering::Release);
            for l in (0..=top).rev() {
                unsafe { (*preds[l]).next[l].store(v.next(l), Ordering::Release) };
            }
            self.retired.lock().unwrap().push(victim as usize);
            return true;
        }
    }

    /// Keys in ascending order. Only meaningful while no update is running.
    pub fn keys(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = unsafe { (*self.head).next(0) };
        while cur != self.tail {
            let n = unsafe { &*cur };
            if n.fully_linked.load(Ordering::Acquire) && !n.marked.load(Ordering::Acquire) {
                out.push(n.key);
            }
            cur = n.next(0);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.keys().len()
    }

    pub fn is_empty(&self) -> bool {
        unsafe { (*self.head).next(0) == self.tail }
    }

    /// Every level sorted and a sub-list of the level below.
    pub fn check(&self) -> Result<(), String> {
        let mut below: Option<Vec<u64>> = None;
        for level in 0..MAX_LEVEL {
            let mut keys = Vec::new();
            let mut cur = unsafe { (*self.head).next(level) };
            while cur != self.tail {
                let n = unsafe { &*cur };
                if n.top < level {
                    return Err(format!("key {} linked above its top level", n.key));
                }
                keys.push(n.key);
                cur = n.next(level);
            }
            if keys.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("level {level} unsorted: {keys:?}"));
            }
            if let Some(b) = &below {
                if let Some(k) = keys.iter().find(|k| b.binary_search(k).is_err()) {
                    return Err(format!("key {k} on level {level} missing below"));
                }
            }
            below = Some(keys);
        }
        Ok(())
    }
}

impl<L> Drop for RangeSkipList<L> {
    fn drop(&mut self) {
        unsafe {
            let mut cur = self.head;
            while !cur.is_null() {
                let next = (*cur).next[0].load(Ordering::Relaxed);
                drop(Box::from_raw(cur));
                cur = next;
            }
            for &n in self.retired.get_mut().unwrap().iter() {
                drop(Box::from_raw(n as *mut SkipNode));
            }
        }
    }
}

impl<L: Default + RangeLocking> Default for RangeSkipList<L> {
    fn default() -> Self {
        Self::new(L::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::TreeRangeLock;
    use crate::RangeLock;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn empty_list() {
        let s = RangeSkipList::new(RangeLock::new());
        assert!(!s.contains(7));
        assert!(s.is_empty());
        s.check().unwrap();
    }

    #[test]
    fn insert_then_contains() {
        let s = RangeSkipList::new(RangeLock::new());
        assert!(s.insert(7));
        assert!(s.contains(7));
        assert!(!s.insert(7));
        assert!(s.remove(7));
        assert!(!s.remove(7));
        assert!(s.is_empty());
    }

    #[test]
    fn extreme_keys() {
        let s = RangeSkipList::new(RangeLock::new());
        assert!(s.insert(0));
        assert!(s.insert(MAX_KEY));
        assert_eq!(s.keys(), vec![0, MAX_KEY]);
        assert!(s.remove(0) && s.remove(MAX_KEY));
    }

    #[test]
    fn contains_takes_no_lock() {
        let s = RangeSkipList::new(RangeLock::new());
        for k in 0..100 {
            s.insert(k * 3);
        }
        let before = stats::get(Counter::SkipListLock);
        for k in 0..300 {
            s.contains(k);
        }
        assert_eq!(stats::get(Counter::SkipListLock), before);
    }

    #[test]
    fn one_lock_per_uncontended_update() {
        let s = RangeSkipList::new(RangeLock::new());
        let before = stats::get(Counter::SkipListLock);
        s.insert(5);
        s.remove(5);
        assert_eq!(stats::get(Counter::SkipListLock) - before, 2);
        s.remove(5);
        assert_eq!(stats::get(Counter::SkipListLock) - before, 2);
    }

    /// Records every range the skip list asks for.
    struct Recording(RangeLock, Mutex<Vec<Range>>);

    impl RangeLocking for Recording {
        type Guard<'a> = crate::RangeGuard<'a>;
        fn lock_range(&self, r: &Range) -> Self::Guard<'_> {
            self.1.lock().unwrap().push(*r);
            self.0.lock(r)
        }
        fn shared_mode(&self) -> bool {
            false
        }
        fn name(&self) -> &'static str {
            "recording"
        }
    }

    #[test]
    fn update_ranges_start_at_highest_predecessor() {
        let s = RangeSkipList::new(Recording(RangeLock::new(), Mutex::new(vec![])));
        s.insert(5);
        s.remove(5);
        let got = s.lock().1.lock().unwrap().clone();
        // The list was empty, so the predecessor at any level is the head.
        assert_eq!(got, vec![Range::write(0, 6).unwrap(), Range::write(0, 7).unwrap()]);
    }

    #[test]
    fn concurrent_disjoint_updates() {
        let s = RangeSkipList::new(RangeLock::new());
        std::thread::scope(|sc| {
            for t in 0..4u64 {
                let s = &s;
                sc.spawn(move || {
                    for i in 0..2000 {
                        let k = i * 4 + t;
                        assert!(s.insert(k));
                        if i % 2 == 0 {
                            assert!(s.remove(k));
                        }
                    }
                });
            }
        });
        s.check().unwrap();
        let want: Vec<u64> = (0..2000u64)
            .filter(|i| i % 2 == 1)
            .flat_map(|i| (0..4).map(move |t| i * 4 + t))
            .collect();
        assert_eq!(s.keys(), want);
    }

    #[test]
    fn works_over_tree_lock() {
        let s = RangeSkipList::new(TreeRangeLock::exclusive());
        std::thread::scope(|sc| {
            for t in 0..3u64 {
                let s = &s;
                sc.spawn(move || {
                    for k in 0..500 {
                        s.insert(k * 3 + t);
                    }
                });
            }
        });
        assert_eq!(s.len(), 1500);
        s.check().unwrap();
    }

    proptest! {
        #[test]
        fn matches_sequential_set(ops in proptest::collection::vec((0u8..3, 0u64..32), 0..300)) {
            let s = RangeSkipList::new(RangeLock::new());
            let mut model = BTreeSet::new();
            for (op, k) in ops {
                match op {
                    0 => prop_assert_eq!(s.insert(k), model.insert(k)),
                    1 => prop_assert_eq!(s.remove(k), model.remove(&k)),
                    _ => prop_assert_eq!(s.contains(k), model.contains(&k)),
                }
            }
            prop_assert_eq!(s.keys(), model.into_iter().collect::<Vec<_>>());
            prop_assert!(s.check().is_ok());
        }
    }
}
