//! Rayon-backed executor and a wall-clock monitor.

use std::time::Instant;

use jc_core::krotov::IterationRecord;
use jc_core::{Executor, Monitor};
use rayon::prelude::*;

/// Runs per-copy work on the current rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl Executor for Parallel {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        if items.len() < 2 {
            return items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect();
        }
        items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }

    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync,
    {
        if items.len() < 2 {
            return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
        }
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Measures wall time and forwards every iteration record to a callback.
pub struct WallClock<F: FnMut(&IterationRecord)> {
    start: Instant,
    callback: F,
}

impl<F: FnMut(&IterationRecord)> WallClock<F> {
    pub fn new(callback: F) -> Self {
        Self {
            start: Instant::now(),
            callback,
        }
    }
}

impl<F: FnMut(&IterationRecord)> Monitor for WallClock<F> {
    fn now_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn on_iteration(&mut self, record: &IterationRecord) {
        (self.callback)(record)
    }
}
