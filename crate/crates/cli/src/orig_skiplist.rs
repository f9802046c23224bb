//! The optimistic skip list with one spin lock per node, as the comparison
//! subject for the range-locked variant.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rangelock::baseline::TtasLock;
use rangelock::skiplist::{MAX_KEY, MAX_LEVEL};

struct Node {
    key: u64,
    top: usize,
    head: bool,
    next: Box<[AtomicPtr<Node>]>,
    lock: TtasLock<()>,
    marked: AtomicBool,
    fully_linked: AtomicBool,
}

impl Node {
    fn alloc(key: u64, top: usize, head: bool) -> *mut Node {
        Box::into_raw(Box::new(Node {
            key,
            top,
            head,
            next: (0..=top).map(|_| AtomicPtr::new(ptr::null_mut())).collect(),
            lock: TtasLock::new(()),
            marked: AtomicBool::new(false),
            fully_linked: AtomicBool::new(false),
        }))
    }

    fn next(&self, l: usize) -> *mut Node {
        self.next[l].load(Ordering::Acquire)
    }
}

type Preds = [*mut Node; MAX_LEVEL];

pub struct OrigSkipList {
    head: *mut Node,
    tail: *mut Node,
    retired: Mutex<Vec<usize>>,
}

unsafe impl Send for OrigSkipList {}
unsafe impl Sync for OrigSkipList {}

impl Default for OrigSkipList {
    fn default() -> Self {
        Self::new()
    }
}

/// Heap bytes of a node with `levels` forward links, header plus link array.
pub fn node_bytes(levels: usize) -> usize {
    std::mem::size_of::<Node>() + levels * std::mem::size_of::<AtomicPtr<Node>>()
}

fn random_level() -> usize {
    let bits: u32 = rand::thread_rng().gen();
    (bits.trailing_ones() as usize).min(MAX_LEVEL - 1)
}

impl OrigSkipList {
    pub fn new() -> Self {
        let head = Node::alloc(0, MAX_LEVEL - 1, true);
        let tail = Node::alloc(u64::MAX, MAX_LEVEL - 1, false);
        unsafe {
            for l in 0..MAX_LEVEL {
                (*head).next[l].store(tail, Ordering::Relaxed);
            }
        }
        OrigSkipList { head, tail, retired: Mutex::new(Vec::new()) }
    }

    fn less(&self, n: *mut Node, key: u64) -> bool {
        let n = unsafe { &*n };
        n.head || (!ptr::eq(n, self.tail) && n.key < key)
    }

    fn find(&self, key: u64, preds: &mut Preds, succs: &mut Preds) -> Option<usize> {
        let mut found = None;
        let mut pred = self.head;
        for l in (0..MAX_LEVEL).rev() {
            let mut cur = unsafe { (*pred).next(l) };
            while self.less(cur, key) {
                pred = cur;
                cur = unsafe { (*pred).next(l) };
            }
            if found.is_none() && cur != self.tail && unsafe { (*cur).key } == key {
                found = Some(l);
            }
            preds[l] = pred;
            succs[l] = cur;
        }
        found
    }

    pub fn contains(&self, key: u64) -> bool {
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        self.find(key, &mut preds, &mut succs).is_some_and(|l| {
            let n = unsafe { &*succs[l] };
            n.fully_linked.load(Ordering::Acquire) && !n.marked.load(Ordering::Acquire)
        })
    }

    // Per-level arrays are indexed in lockstep.
    #[allow(clippy::needless_range_loop)]
    pub fn insert(&self, key: u64) -> bool {
        assert!(key <= MAX_KEY);
        let top = random_level();
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        loop {
            if let Some(l) = self.find(key, &mut preds, &mut succs) {
                let n = unsafe { &*succs[l] };
                if !n.marked.load(Ordering::Acquire) {
                    while !n.fully_linked.load(Ordering::Acquire) {
                        std::hint::spin_loop();
                    }
                    return false;
                }
                continue;
            }
            let mut guards = Vec::with_capacity(top + 1);
            let mut prev: *mut Node = ptr::null_mut();
            let mut valid = true;
            for l in 0..=top {
                let (p, s) = (preds[l], succs[l]);
                if p != prev {
                    guards.push(unsafe { (*p).lock.lock() });
                    prev = p;
                }
                unsafe {
                    valid = !(*p).marked.load(Ordering::Acquire)
                        && !(*s).marked.load(Ordering::Acquire)
                        && (*p).next(l) == s;
                }
                if !valid {
                    break;
                }
            }
            if !valid {
                continue;
            }
            let node = Node::alloc(key, top, false);
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

    // Per-level arrays are indexed in lockstep.
    #[allow(clippy::needless_range_loop)]
    pub fn remove(&self, key: u64) -> bool {
        let mut preds = [ptr::null_mut(); MAX_LEVEL];
        let mut succs = [ptr::null_mut(); MAX_LEVEL];
        let mut victim_guard = None;
        let mut victim: *mut Node = ptr::null_mut();
        loop {
            let found = self.find(key, &mut preds, &mut succs);
            if victim_guard.is_none() {
                let Some(l) = found else { return false };
                let v = unsafe { &*succs[l] };
                if !v.fully_linked.load(Ordering::Acquire) || v.top != l || v.marked.load(Ordering::Acquire) {
                    return false;
                }
                let g = v.lock.lock();
                if v.marked.load(Ordering::Acquire) {
                    return false;
                }
                v.marked.store(true, Ordering::Release);
                victim = succs[l];
                victim_guard = Some(g);
            }
            let top = unsafe { (*victim).top };
            let mut guards = Vec::with_capacity(top + 1);
            let mut prev: *mut Node = ptr::null_mut();
            let mut valid = true;
            for l in 0..=top {
                let p = preds[l];
                if p != prev {
                    guards.push(unsafe { (*p).lock.lock() });
                    prev = p;
                }
                unsafe {
                    valid = !(*p).marked.load(Ordering::Acquire) && (*p).next(l) == victim;
                }
                if !valid {
                    break;
                }
            }
            if !valid {
                continue;
            }
            for l in (0..=top).rev() {
                unsafe { (*preds[l]).next[l].store((*victim).next(l), Ordering::Release) };
            }
            drop(guards);
            drop(victim_guard);
            self.retired.lock().unwrap().push(victim as usize);
            return true;
        }
    }

    pub fn keys(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = unsafe { (*self.head).next(0) };
        while cur != self.tail {
            let n = unsafe { &*cur };
            if !n.marked.load(Ordering::Acquire) {
                out.push(n.key);
            }
            cur = n.next(0);
        }
        out
    }
}

impl Drop for OrigSkipList {
    fn drop(&mut self) {
        unsafe {
            let mut cur = self.head;
            while !cur.is_null() {
                let next = (*cur).next[0].load(Ordering::Relaxed);
                drop(Box::from_raw(cur));
                cur = next;
            }
            for &n in self.retired.get_mut().unwrap().iter() {
                drop(Box::from_raw(n as *mut Node));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn sequential_oracle() {
        let s = OrigSkipList::new();
        let mut model = BTreeSet::new();
        let mut rng = rand::thread_rng();
        for _ in 0..5000 {
            let k = rng.gen_range(0..200);
            match rng.gen_range(0..3) {
                0 => assert_eq!(s.insert(k), model.insert(k)),
                1 => assert_eq!(s.remove(k), model.remove(&k)),
                _ => assert_eq!(s.contains(k), model.contains(&k)),
            }
        }
        assert_eq!(s.keys(), model.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn per_node_lock_never_shrinks_node() {
        // A one-byte spin lock fits in padding, so the two layouts can tie.
        assert!(node_bytes(1) >= rangelock::skiplist::node_bytes(1));
    }

    #[test]
    fn concurrent_disjoint_keys() {
        let s = OrigSkipList::new();
        std::thread::scope(|sc| {
            for t in 0..4u64 {
                let s = &s;
                sc.spawn(move || {
                    for i in 0..2000 {
                        assert!(s.insert(i * 4 + t));
                        if i % 2 == 0 {
                            assert!(s.remove(i * 4 + t));
                        }
                    }
                });
            }
        });
        assert_eq!(s.keys().len(), 4000);
    }
}
