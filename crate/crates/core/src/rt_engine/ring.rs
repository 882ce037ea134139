//! Single-writer, single-reader sample ring.
//!
//! Samples are stored as `f64` bit patterns in atomics, so the reader can copy
//! the most recent samples while the writer keeps going. The writer never
//! waits; the reader detects an overwrite during its copy from the write
//! counter and retries.

use std::sync::atomic::{AtomicU64, Ordering};

pub struct RingBuffer {
    data: Box<[AtomicU64]>,
    written: AtomicU64,
}

impl RingBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        RingBuffer {
            data: (0..capacity).map(|_| AtomicU64::new(0)).collect(),
            written: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.data.len()
    }

    /// Total number of samples written since creation.
    pub fn written(&self) -> u64 {
        self.written.load(Ordering::Acquire)
    }

    /// Append samples. Must only be called from the single writer.
    pub fn write(&self, block: &[f64]) {
        let cap = self.data.len() as u64;
        let start = self.written.load(Ordering::Relaxed);
        for (i, v) in block.iter().enumerate() {
            let slot = ((start + i as u64) % cap) as usize;
            self.data[slot].store(v.to_bits(), Ordering::Relaxed);
        }
        self.written.store(start + block.len() as u64, Ordering::Release);
    }

    /// Copy samples `[start, start + out.len())` (absolute indices). Returns
    /// false if any of them is not yet written or already overwritten.
    pub fn read_at(&self, start: u64, out: &mut [f64]) -> bool {
        let cap = self.data.len() as u64;
        let end = start + out.len() as u64;
        let before = self.written.load(Ordering::Acquire);
        if end > before || out.len() as u64 > cap || before - start > cap {
            return false;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let slot = ((start + i as u64) % cap) as usize;
            *o = f64::from_bits(self.data[slot].load(Ordering::Relaxed));
        }
        std::sync::atomic::fence(Ordering::Acquire);
        let after = self.written.load(Ordering::Relaxed);
        // the oldest slot we copied must not have been reused meanwhile
        after - start <= cap
    }

    /// Copy the most recent `out.len()` samples. Retries a few times if the
    /// writer laps the copy; returns false if there is not enough data or
    /// every attempt was overtaken.
    pub fn snapshot(&self, out: &mut [f64]) -> bool {
        for _ in 0..4 {
            let w = self.written();
            if w < out.len() as u64 {
                return false;
            }
            if self.read_at(w - out.len() as u64, out) {
                return true;
            }
        }
        false
    }
}
