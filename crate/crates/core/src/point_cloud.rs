//! Sliding stack of recent sensor frames with fixed-count uniform subsampling.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::Rng;

/// Default number of frames kept in the stack.
pub const DEFAULT_FRAMES: usize = 5;
/// Default number of points handed to the collision check.
pub const DEFAULT_SAMPLE_SIZE: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Points in the world frame.
    pub points: Vec<Vector3<f64>>,
    /// Sensor position at capture time.
    pub pose: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct CloudStack {
    frames: VecDeque<Frame>,
    capacity: usize,
    total: usize,
}

impl CloudStack {
    /// A stack holding at most `capacity` frames (at least one).
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { frames: VecDeque::with_capacity(capacity + 1), capacity, total: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Total number of points across all frames.
    pub fn total_points(&self) -> usize {
        self.total
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    /// Appends a frame, evicting the oldest once the capacity is exceeded.
    pub fn push_frame(&mut self, points: Vec<Vector3<f64>>, pose: Vector3<f64>) {
        self.total += points.len();
        self.frames.push_back(Frame { points, pose });
        while self.frames.len() > self.capacity {
            if let Some(old) = self.frames.pop_front() {
                self.total -= old.points.len();
            }
        }
    }

    pub fn clear(&mut self) {
        self.frames.clear();
        self.total = 0;
    }

    /// Uniform sample of `min(total, n)` points without replacement.
    ///
    /// Single pass over the stored points using geometric skips between
    /// reservoir replacements, so most points are never touched.
    pub fn sample_fixed<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
        if n == 0 {
            return Vec::new();
        }
        if self.total <= n {
            return self.frames.iter().flat_map(|f| f.points.iter().copied()).collect();
        }
        let mut reservoir: Vec<Vector3<f64>> = Vec::with_capacity(n);
        let mut flat = self.frames.iter().flat_map(|f| f.points.iter());
        reservoir.extend(flat.by_ref().take(n).copied());

        // Algorithm L: the gap to the next replacement is geometric with a
        // success probability that shrinks as the stream grows.
        let mut remaining = self.total - n;
        let mut w = (ln_unit(rng) / n as f64).exp();
        loop {
            let skip = (ln_unit(rng) / (1.0 - w).ln()).floor();
            if !skip.is_finite() || skip >= remaining as f64 {
                break;
            }
            remaining -= skip as usize + 1;
            match flat.nth(skip as usize) {
                Some(p) => {
                    let slot = rng.random_range(0..n);
                    reservoir[slot] = *p;
                    w *= (ln_unit(rng) / n as f64).exp();
                }
                None => break,
            }
        }
        reservoir
    }
}

/// `ln(u)` for `u` uniform on (0, 1].
fn ln_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (1.0 - rng.random::<f64>()).ln()
}
