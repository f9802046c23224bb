//! Baseline range locks used for comparison.
//!
//! [`TreeRangeLock`] keeps every pending and held range in an interval tree
//! under one spin lock and grants ranges in arrival order.
//! [`SegmentRangeLock`] divides a fixed span into segments, each with its own
//! reader-writer lock.

pub mod interval_tree;
mod segment;
mod tree;
mod ttas;

pub use segment::{SegmentGuard, SegmentRangeLock};
pub use tree::{TreeGuard, TreeRangeLock};
pub use ttas::{TtasGuard, TtasLock};
