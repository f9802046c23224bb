use std::cell::UnsafeCell;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::wait::{Backoff, WaitPolicy};

/// Test-and-test-and-set spin mutex.
#[derive(Default)]
pub struct TtasLock<T> {
    locked: AtomicBool,
    value: UnsafeCell<T>,
}

unsafe impl<T: Send> Send for TtasLock<T> {}
unsafe impl<T: Send> Sync for TtasLock<T> {}

impl<T> TtasLock<T> {
    pub const fn new(value: T) -> Self {
        TtasLock { locked: AtomicBool::new(false), value: UnsafeCell::new(value) }
    }

    pub fn lock(&self) -> TtasGuard<'_, T> {
        let mut backoff = Backoff::new(WaitPolicy::default());
        loop {
            if !self.locked.load(Ordering::Relaxed)
                && self
                    .locked
                    .compare_exchange_weak(false, true, Ordering::Acquire, Ordering::Relaxed)
                    .is_ok()
            {
                return TtasGuard { lock: self };
            }
            backoff.pause();
        }
    }

    pub fn try_lock(&self) -> Option<TtasGuard<'_, T>> {
        self.locked
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .ok()
            .map(|_| TtasGuard { lock: self })
    }

    pub fn is_locked(&self) -> bool {
        self.locked.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> T {
        self.value.into_inner()
    }
}

#[must_use]
pub struct TtasGuard<'a, T> {
    lock: &'a TtasLock<T>,
}

impl<T> Deref for TtasGuard<'_, T> {
    type Target = T;

    fn deref(&self) -> &T {
        unsafe { &*self.lock.value.get() }
    }
}

impl<T> DerefMut for TtasGuard<'_, T> {
    fn deref_mut(&mut self) -> &mut T {
        unsafe { &mut *self.lock.value.get() }
    }
}

impl<T> Drop for TtasGuard<'_, T> {
    fn drop(&mut self) {
        self.lock.locked.store(false, Ordering::Release);
    }
}
