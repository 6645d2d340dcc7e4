//! Uniform time grids on `[0, T]`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    points: usize,
}

impl TimeGrid {
    /// `points` nodes including both endpoints.
    pub fn uniform(horizon: f64, points: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {points}")));
        }
        Ok(Self { horizon, points })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> usize {
        self.points - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    /// Node `k`; the last node is exactly `T`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps() {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps() as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.time(k)).collect()
    }

    /// Index of the node nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = (t / self.step() + 0.5) as usize;
        k.min(self.steps())
    }
}
