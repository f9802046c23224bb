//! Harnesses shared by the unit, integration and acceptance tests: shadow
//! occupancy tracking for any [`crate::RangeLocking`] implementation and a
//! linearizability checker for set histories.

pub mod lincheck;
pub mod occupancy;

use rand::Rng;

/// Draw a non-empty range in `[0, slots)` from two uniform endpoints,
/// swapped if inverted and redrawn if equal.
pub fn random_range<R: Rng>(rng: &mut R, slots: u64) -> (u64, u64) {
    assert!(slots >= 2, "need at least two slots for a non-empty range");
    loop {
        let a = rng.gen_range(0..slots);
        let b = rng.gen_range(0..slots);
        match a.cmp(&b) {
            std::cmp::Ordering::Less => return (a, b),
            std::cmp::Ordering::Greater => return (b, a),
            std::cmp::Ordering::Equal => continue,
        }
    }
}
