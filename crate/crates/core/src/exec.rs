//! Pluggable execution of independent per-copy work.

use alloc::vec::Vec;

/// Runs independent closures over a slice; results come back in slice order.
pub trait Executor: Sync {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync;

    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync,
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Source of wall-clock time for iteration logs.
pub trait Monitor {
    fn now_ms(&self) -> f64 {
        0.0
    }

    fn on_iteration(&mut self, _record: &crate::krotov::IterationRecord) {}
}

impl Monitor for () {}
