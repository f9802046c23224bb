//! Epoch-based deferred reuse of list nodes.
//!
//! Every thread owns an [`EpochSlot`] whose counter is odd while the thread
//! traverses a lock list, and two node pools: *active* (free nodes) and
//! *reclaimed* (nodes this thread unlinked). When the active pool runs dry
//! the thread runs a barrier over the other threads' epochs; once every
//! thread that was mid-traversal has moved on, the reclaimed nodes can be
//! handed out again.
//!
//! The barrier wait is bounded. If another thread stays in the same odd
//! epoch past the budget (it may be waiting on a range the allocating thread
//! itself holds), the batch stays pending and fresh nodes are allocated
//! instead, so a blocked traversal can never deadlock an allocation.

use std::cell::RefCell;
use std::sync::atomic::{fence, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::list::node::{Node, NodePtr};
use crate::stats::{self, Counter};
use crate::wait::{Backoff, WaitPolicy};

/// Default target size of a thread's active pool.
pub const DEFAULT_POOL_TARGET: usize = 128;

static POOL_TARGET: AtomicUsize = AtomicUsize::new(DEFAULT_POOL_TARGET);

/// How long a barrier waits on a single straggler before deferring the batch.
const BARRIER_BUDGET: Duration = Duration::from_millis(5);

/// Set the pool target `N` used by threads that join the domain afterwards.
pub fn set_pool_target(n: usize) {
    assert!(n >= 2, "pool target must be at least 2");
    POOL_TARGET.store(n, Ordering::Relaxed);
}

pub fn pool_target() -> usize {
    POOL_TARGET.load(Ordering::Relaxed)
}

/// Per-thread epoch counter: even when quiescent, odd inside a traversal.
#[repr(align(128))]
#[derive(Debug, Default)]
pub struct EpochSlot {
    epoch: AtomicU64,
}

impl EpochSlot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    /// Mark the start of a traversal. Only the owning thread may call this.
    pub fn enter_traversal(&self) {
        let e = self.epoch.load(Ordering::Relaxed);
        assert!(e.is_multiple_of(2), "nested traversal (epoch {e})");
        self.epoch.store(e + 1, Ordering::Relaxed);
        // The odd epoch must be visible before any list word is read.
        fence(Ordering::SeqCst);
    }

    pub fn exit_traversal(&self) {
        let e = self.epoch.load(Ordering::Relaxed);
        assert!(e % 2 == 1, "exit without matching enter (epoch {e})");
        self.epoch.store(e + 1, Ordering::Release);
    }

    pub fn in_traversal(&self) -> bool {
        self.epoch.load(Ordering::Relaxed) % 2 == 1
    }
}

/// Odd epochs observed when a batch of retired nodes was sealed.
#[derive(Debug, Default)]
pub struct GracePeriod {
    waits: Vec<(Arc<EpochSlot>, u64)>,
}

impl GracePeriod {
    /// Record every slot in `slots` (other than `own`) that is mid-traversal.
    pub fn observe(slots: &[Arc<EpochSlot>], own: Option<&EpochSlot>) -> Self {
        fence(Ordering::SeqCst);
        let waits = slots
            .iter()
            .filter(|s| own.is_none_or(|o| !std::ptr::eq(Arc::as_ptr(s), o)))
            .filter_map(|s| {
                let e = s.epoch.load(Ordering::Acquire);
                (e % 2 == 1).then(|| (Arc::clone(s), e))
            })
            .collect();
        GracePeriod { waits }
    }

    /// Drop the slots that have left the recorded epoch; true when none remain.
    pub fn poll(&mut self) -> bool {
        self.waits.retain(|(s, e)| s.epoch.load(Ordering::Acquire) == *e);
        self.waits.is_empty()
    }

    /// Wait for the grace period to elapse, for at most `budget`.
    pub fn wait(&mut self, policy: WaitPolicy, budget: Option<Duration>) -> bool {
        let deadline = budget.map(|b| Instant::now() + b);
        let mut backoff = Backoff::new(policy);
        let mut polls = 0u32;
        loop {
            if self.poll() {
                return true;
            }
            polls = polls.wrapping_add(1);
            if polls.is_multiple_of(64) && deadline.is_some_and(|d| Instant::now() >= d) {
                return false;
            }
            backoff.pause();
        }
    }
}

struct Pending {
    nodes: Vec<NodePtr>,
    grace: GracePeriod,
}

/// A thread's two node pools plus a batch whose grace period is in progress.
pub(crate) struct NodePools {
    active: Vec<NodePtr>,
    reclaimed: Vec<NodePtr>,
    pending: Option<Pending>,
    target: usize,
}

// Nodes in the pools are owned exclusively by the pool.
unsafe impl Send for NodePools {}

impl NodePools {
    pub(crate) fn new(target: usize) -> Self {
        let active = (0..target).map(|_| Node::boxed()).collect();
        NodePools { active, reclaimed: Vec::new(), pending: None, target }
    }

    pub(crate) fn active_len(&self) -> usize {
        self.active.len()
    }

    pub(crate) fn reclaimed_len(&self) -> usize {
        self.reclaimed.len() + self.pending.as_ref().map_or(0, |p| p.nodes.len())
    }

    pub(crate) fn retire(&mut self, node: NodePtr) {
        debug_assert!(
            !self.reclaimed.contains(&node),
            "node {node:p} retired twice"
        );
        self.reclaimed.push(node);
    }

    /// Return a node that was allocated but never published.
    pub(crate) fn give_back(&mut self, node: NodePtr) {
        self.active.push(node);
    }

    pub(crate) fn allocate(
        &mut self,
        own: &EpochSlot,
        others: impl FnOnce() -> Vec<Arc<EpochSlot>>,
    ) -> NodePtr {
        if let Some(n) = self.active.pop() {
            return n;
        }
        self.refill(own, others);
        self.active.pop().unwrap_or_else(Node::boxed)
    }

    fn refill(&mut self, own: &EpochSlot, others: impl FnOnce() -> Vec<Arc<EpochSlot>>) {
        adopt_orphans(&mut self.reclaimed);
        if self.pending.is_none() {
            if self.reclaimed.is_empty() {
                self.top_up(self.target);
                return;
            }
            let slots = others();
            self.pending = Some(Pending {
                nodes: std::mem::take(&mut self.reclaimed),
                grace: GracePeriod::observe(&slots, Some(own)),
            });
        }
        let pending = self.pending.as_mut().expect("pending batch");
        if pending.grace.wait(WaitPolicy::default(), Some(BARRIER_BUDGET)) {
            stats::bump(Counter::Barrier);
            let batch = self.pending.take().expect("pending batch");
            if cfg!(debug_assertions) {
                for n in &batch.nodes {
                    unsafe { n.as_ref() }.poison();
                }
            }
            self.active.extend(batch.nodes);
            self.rebalance();
        } else {
            stats::bump(Counter::BarrierTimeout);
            self.top_up(self.target / 2);
        }
    }

    fn top_up(&mut self, to: usize) {
        while self.active.len() < to {
            self.active.push(Node::boxed());
        }
    }

    fn rebalance(&mut self) {
        let n = self.target;
        if self.active.len() < n / 2 {
            self.top_up(n);
        } else if self.active.len() > 2 * n {
            for node in self.active.drain(n..) {
                unsafe { Node::free(node) };
            }
        }
    }

    /// Free everything once it is safe; otherwise hand retired nodes to the
    /// orphan list for adoption by a live thread.
    fn drain(mut self, own: Option<&EpochSlot>) {
        let mut retired = std::mem::take(&mut self.reclaimed);
        if let Some(p) = self.pending.take() {
            retired.extend(p.nodes);
        }
        for n in self.active.drain(..) {
            unsafe { Node::free(n) };
        }
        if retired.is_empty() {
            return;
        }
        let slots = registry_snapshot();
        let mut grace = GracePeriod::observe(&slots, own);
        if grace.wait(WaitPolicy::default(), Some(BARRIER_BUDGET)) {
            for n in retired {
                unsafe { Node::free(n) };
            }
        } else {
            let mut orphans = ORPHANS.lock().unwrap_or_else(|e| e.into_inner());
            ORPHAN_COUNT.fetch_add(retired.len(), Ordering::Relaxed);
            orphans.extend(retired.into_iter().map(SendPtr));
        }
    }
}

struct SendPtr(NodePtr);
unsafe impl Send for SendPtr {}

static REGISTRY: Mutex<Vec<Arc<EpochSlot>>> = Mutex::new(Vec::new());
static ORPHANS: Mutex<Vec<SendPtr>> = Mutex::new(Vec::new());
static ORPHAN_COUNT: AtomicUsize = AtomicUsize::new(0);

fn registry_snapshot() -> Vec<Arc<EpochSlot>> {
    REGISTRY.lock().unwrap_or_else(|e| e.into_inner()).clone()
}

fn register(slot: &Arc<EpochSlot>) {
    REGISTRY.lock().unwrap_or_else(|e| e.into_inner()).push(Arc::clone(slot));
}

fn deregister(slot: &EpochSlot) {
    REGISTRY
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .retain(|s| !std::ptr::eq(Arc::as_ptr(s), slot));
}

/// Move orphaned retired nodes into `into`. They still need a grace period,
/// which the adopting thread's next barrier provides.
fn adopt_orphans(into: &mut Vec<NodePtr>) {
    if ORPHAN_COUNT.load(Ordering::Relaxed) == 0 {
        return;
    }
    let mut orphans = ORPHANS.lock().unwrap_or_else(|e| e.into_inner());
    ORPHAN_COUNT.fetch_sub(orphans.len(), Ordering::Relaxed);
    into.extend(orphans.drain(..).map(|p| p.0));
}

/// Number of threads currently registered with the reclamation domain.
pub fn registered_threads() -> usize {
    REGISTRY.lock().unwrap_or_else(|e| e.into_inner()).len()
}

struct Local {
    slot: Arc<EpochSlot>,
    pools: Option<NodePools>,
}

impl Local {
    fn join() -> Self {
        let slot = Arc::new(EpochSlot::new());
        register(&slot);
        Local { slot, pools: Some(NodePools::new(pool_target())) }
    }
}

impl Drop for Local {
    fn drop(&mut self) {
        deregister(&self.slot);
        if let Some(pools) = self.pools.take() {
            pools.drain(Some(&self.slot));
        }
    }
}

thread_local! {
    static LOCAL: RefCell<Local> = RefCell::new(Local::join());
}

/// Take a node from this thread's active pool.
pub(crate) fn allocate() -> NodePtr {
    LOCAL
        .try_with(|l| {
            let mut l = l.borrow_mut();
            let slot = Arc::clone(&l.slot);
            l.pools
                .as_mut()
                .expect("pools present while thread is live")
                .allocate(&slot, registry_snapshot)
        })
        .unwrap_or_else(|_| Node::boxed())
}

/// Hand back a node that was never made reachable.
pub(crate) fn give_back(node: NodePtr) {
    let ok = LOCAL.try_with(|l| {
        l.borrow_mut().pools.as_mut().expect("pools").give_back(node)
    });
    if ok.is_err() {
        unsafe { Node::free(node) };
    }
}

/// Queue an unlinked node for reuse after a grace period.
pub(crate) fn retire(node: NodePtr) {
    let ok = LOCAL.try_with(|l| {
        l.borrow_mut().pools.as_mut().expect("pools").retire(node)
    });
    if ok.is_err() {
        let mut orphans = ORPHANS.lock().unwrap_or_else(|e| e.into_inner());
        orphans.push(SendPtr(node));
        ORPHAN_COUNT.fetch_add(1, Ordering::Relaxed);
    }
}

/// Pool occupancy of the calling thread: `(active, reclaimed)`.
pub fn local_pool_sizes() -> (usize, usize) {
    LOCAL.with(|l| {
        let l = l.borrow();
        let p = l.pools.as_ref().expect("pools");
        (p.active_len(), p.reclaimed_len())
    })
}

/// RAII bracket around a list traversal.
pub(crate) struct Pin {
    slot: Arc<EpochSlot>,
    temporary: bool,
}

pub(crate) fn pin() -> Pin {
    let pin = LOCAL
        .try_with(|l| Pin { slot: Arc::clone(&l.borrow().slot), temporary: false })
        .unwrap_or_else(|_| {
            // Thread-local state is gone (thread teardown): protect this one
            // traversal with a short-lived registered slot.
            let slot = Arc::new(EpochSlot::new());
            register(&slot);
            Pin { slot, temporary: true }
        });
    pin.slot.enter_traversal();
    pin
}

impl Drop for Pin {
    fn drop(&mut self) {
        self.slot.exit_traversal();
        if self.temporary {
            deregister(&self.slot);
        }
    }
}
