//! AVL tree of half-open intervals keyed by `(start, tag)`, augmented with
//! the maximum end of every subtree for overlap queries.

use std::cmp::Ordering;

type Link<V> = Option<Box<TreeNode<V>>>;

struct TreeNode<V> {
    start: u64,
    tag: u64,
    end: u64,
    max_end: u64,
    height: i32,
    value: V,
    left: Link<V>,
    right: Link<V>,
}

impl<V> TreeNode<V> {
    fn key(&self) -> (u64, u64) {
        (self.start, self.tag)
    }

    fn update(&mut self) {
        self.height = 1 + height(&self.left).max(height(&self.right));
        self.max_end = self.end.max(max_end(&self.left)).max(max_end(&self.right));
    }

    fn balance(&self) -> i32 {
        height(&self.left) - height(&self.right)
    }
}

fn height<V>(l: &Link<V>) -> i32 {
    l.as_ref().map_or(0, |n| n.height)
}

fn max_end<V>(l: &Link<V>) -> u64 {
    l.as_ref().map_or(0, |n| n.max_end)
}

fn rotate_right<V>(mut n: Box<TreeNode<V>>) -> Box<TreeNode<V>> {
    let mut l = n.left.take().expect("rotate_right without left child");
    n.left = l.right.take();
    n.update();
    l.right = Some(n);
    l.update();
    l
}

fn rotate_left<V>(mut n: Box<TreeNode<V>>) -> Box<TreeNode<V>> {
    let mut r = n.right.take().expect("rotate_left without right child");
    n.right = r.left.take();
    n.update();
    r.left = Some(n);
    r.update();
    r
}

fn rebalance<V>(mut n: Box<TreeNode<V>>) -> Box<TreeNode<V>> {
    n.update();
    let b = n.balance();
    if b > 1 {
        if n.left.as_ref().unwrap().balance() < 0 {
            n.left = Some(rotate_left(n.left.take().unwrap()));
        }
        return rotate_right(n);
    }
    if b < -1 {
        if n.right.as_ref().unwrap().balance() > 0 {
            n.right = Some(rotate_right(n.right.take().unwrap()));
        }
        return rotate_left(n);
    }
    n
}

fn insert<V>(link: Link<V>, new: Box<TreeNode<V>>) -> Box<TreeNode<V>> {
    let Some(mut n) = link else { return new };
    match new.key().cmp(&n.key()) {
        Ordering::Less => n.left = Some(insert(n.left.take(), new)),
        Ordering::Greater => n.right = Some(insert(n.right.take(), new)),
        Ordering::Equal => panic!("duplicate interval key {:?}", new.key()),
    }
    rebalance(n)
}

fn remove_min<V>(mut n: Box<TreeNode<V>>) -> (Link<V>, Box<TreeNode<V>>) {
    match n.left.take() {
        None => (n.right.take(), n),
        Some(l) => {
            let (rest, min) = remove_min(l);
            n.left = rest;
            (Some(rebalance(n)), min)
        }
    }
}

fn remove<V>(link: Link<V>, key: (u64, u64), out: &mut Option<(u64, V)>) -> Link<V> {
    let mut n = link?;
    match key.cmp(&n.key()) {
        Ordering::Less => n.left = remove(n.left.take(), key, out),
        Ordering::Greater => n.right = remove(n.right.take(), key, out),
        Ordering::Equal => {
            let (left, right) = (n.left.take(), n.right.take());
            let TreeNode { end, value, .. } = *n;
            *out = Some((end, value));
            return match (left, right) {
                (None, r) => r,
                (l, None) => l,
                (l, Some(r)) => {
                    let (rest, mut min) = remove_min(r);
                    min.left = l;
                    min.right = rest;
                    Some(rebalance(min))
                }
            };
        }
    }
    Some(rebalance(n))
}

fn visit<V>(link: &Link<V>, start: u64, end: u64, f: &mut impl FnMut(u64, u64, u64, &V)) {
    let Some(n) = link else { return };
    if n.max_end <= start {
        return;
    }
    visit(&n.left, start, end, f);
    if n.start < end {
        if n.end > start {
            f(n.start, n.tag, n.end, &n.value);
        }
        visit(&n.right, start, end, f);
    }
}

fn check<V>(link: &Link<V>, lo: Option<(u64, u64)>, hi: Option<(u64, u64)>) -> Result<(i32, u64), String> {
    let Some(n) = link else { return Ok((0, 0)) };
    if lo.is_some_and(|lo| n.key() <= lo) || hi.is_some_and(|hi| n.key() >= hi) {
        return Err(format!("key {:?} out of order", n.key()));
    }
    let (hl, ml) = check(&n.left, lo, Some(n.key()))?;
    let (hr, mr) = check(&n.right, Some(n.key()), hi)?;
    if (hl - hr).abs() > 1 {
        return Err(format!("unbalanced at {:?}", n.key()));
    }
    if n.height != 1 + hl.max(hr) {
        return Err(format!("stale height at {:?}", n.key()));
    }
    let m = n.end.max(ml).max(mr);
    if n.max_end != m {
        return Err(format!("stale max_end at {:?}", n.key()));
    }
    Ok((n.height, m))
}

pub struct IntervalTree<V> {
    root: Link<V>,
    len: usize,
}

impl<V> Default for IntervalTree<V> {
    fn default() -> Self {
        IntervalTree { root: None, len: 0 }
    }
}

impl<V> IntervalTree<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> i32 {
        height(&self.root)
    }

    /// Insert `[start, end)` under the unique key `(start, tag)`.
    ///
    /// # Panics
    /// If the key is already present.
    pub fn insert(&mut self, start: u64, tag: u64, end: u64, value: V) {
        let node = Box::new(TreeNode {
            start,
            tag,
            end,
            max_end: end,
            height: 1,
            value,
            left: None,
            right: None,
        });
        self.root = Some(insert(self.root.take(), node));
        self.len += 1;
    }

    /// Remove the interval keyed `(start, tag)`, returning its end and value.
    pub fn remove(&mut self, start: u64, tag: u64) -> Option<(u64, V)> {
        let mut out = None;
        self.root = remove(self.root.take(), (start, tag), &mut out);
        if out.is_some() {
            self.len -= 1;
        }
        out
    }

    /// Call `f(start, tag, end, value)` for every interval overlapping
    /// `[start, end)`, in key order.
    pub fn for_each_overlap(&self, start: u64, end: u64, mut f: impl FnMut(u64, u64, u64, &V)) {
        visit(&self.root, start, end, &mut f);
    }

    pub fn for_each(&self, f: impl FnMut(u64, u64, u64, &V)) {
        self.for_each_overlap(0, u64::MAX, f)
    }

    /// Verify ordering, balance and augmentation.
    pub fn check(&self) -> Result<(), String> {
        check(&self.root, None, None).map(drop)
    }
}

impl<V> Drop for IntervalTree<V> {
    fn drop(&mut self) {
        // Iterative so teardown never recurses.
        let mut stack: Vec<Box<TreeNode<V>>> = self.root.take().into_iter().collect();
        while let Some(mut n) = stack.pop() {
            stack.extend(n.left.take());
            stack.extend(n.right.take());
        }
    }
}
