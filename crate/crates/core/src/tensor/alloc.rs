//! Tracked tensor storage.
//!
//! Every tensor buffer in the crate lives in a [`TrackedVec`], which reports
//! its byte size to a per-thread counter on creation and on drop. The counter
//! keeps a high-water mark that souping runs use as their memory metric; OS
//! resident-set size is too noisy at the graph sizes this crate targets.
//!
//! Counters are thread-local. A buffer allocated on one thread and dropped on
//! another will skew both threads' live counts, so measurements are only
//! meaningful for work confined to one thread (every souping run is).

use std::cell::Cell;
use std::ops::{Deref, DerefMut};

thread_local! {
    static LIVE: Cell<i64> = const { Cell::new(0) };
    static PEAK: Cell<i64> = const { Cell::new(0) };
}

fn on_alloc(bytes: usize) {
    LIVE.with(|live| {
        let now = live.get() + bytes as i64;
        live.set(now);
        PEAK.with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
}

fn on_free(bytes: usize) {
    LIVE.with(|live| live.set(live.get() - bytes as i64));
}

/// Bytes of tracked tensor data currently alive on this thread.
pub fn live_bytes() -> i64 {
    LIVE.with(Cell::get)
}

/// High-water mark of [`live_bytes`] since the last [`reset_peak`].
pub fn peak_bytes() -> i64 {
    PEAK.with(Cell::get)
}

/// Restart the high-water mark from the current live size.
pub fn reset_peak() {
    let live = live_bytes();
    PEAK.with(|peak| peak.set(live));
}

/// Measures the peak tracked allocation of a run above the live size at its
/// start, with per-lap resets (one lap per epoch).
#[derive(Debug)]
pub struct PeakMeter {
    base: i64,
    max_above_base: i64,
}

impl PeakMeter {
    pub fn start() -> Self {
        reset_peak();
        Self {
            base: live_bytes(),
            max_above_base: 0,
        }
    }

    /// Fold the peak since the previous lap into the run maximum and reset it.
    pub fn lap(&mut self) -> u64 {
        let lap_peak = (peak_bytes() - self.base).max(0);
        self.max_above_base = self.max_above_base.max(lap_peak);
        reset_peak();
        lap_peak as u64
    }

    pub fn finish(mut self) -> u64 {
        self.lap();
        self.max_above_base as u64
    }
}

/// A `Vec` whose heap size is reported to the allocation counter.
///
/// The tracked size is `len * size_of::<T>()`, fixed at construction; the
/// wrapper never exposes operations that change the length.
pub struct TrackedVec<T> {
    inner: Vec<T>,
}

impl<T> TrackedVec<T> {
    pub fn new(inner: Vec<T>) -> Self {
        on_alloc(inner.len() * std::mem::size_of::<T>());
        Self { inner }
    }

    pub fn bytes(&self) -> usize {
        self.inner.len() * std::mem::size_of::<T>()
    }

    pub fn into_inner(mut self) -> Vec<T> {
        on_free(self.bytes());
        std::mem::take(&mut self.inner)
    }
}

impl<T: Clone> TrackedVec<T> {
    pub fn filled(value: T, len: usize) -> Self {
        Self::new(vec![value; len])
    }
}

impl<T> Drop for TrackedVec<T> {
    fn drop(&mut self) {
        on_free(self.bytes());
    }
}

impl<T: Clone> Clone for TrackedVec<T> {
    fn clone(&self) -> Self {
        Self::new(self.inner.clone())
    }
}

impl<T> Deref for TrackedVec<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.inner
    }
}

impl<T> DerefMut for TrackedVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.inner
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for TrackedVec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.inner.fmt(f)
    }
}

impl<T: PartialEq> PartialEq for TrackedVec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}
