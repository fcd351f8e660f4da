use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};

pub const MAX_GRID_POINTS: f64 = 2e6;
pub const MIN_GRID_POINTS: usize = 100;

/// Equally spaced candidate values `lower, lower + step, ...` not exceeding `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl SearchGrid {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(IvError::InvalidGrid(format!("need finite lower < upper, got [{lower}, {upper}]")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(IvError::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if (upper - lower) / step > MAX_GRID_POINTS {
            return Err(IvError::InvalidGrid(format!(
                "{:.0} points exceeds the limit of {MAX_GRID_POINTS:.0}",
                (upper - lower) / step
            )));
        }
        Ok(Self { lower, upper, step })
    }

    /// Like [`SearchGrid::new`] but widens the step so the point cap is respected.
    pub fn capped(lower: f64, upper: f64, step: f64) -> Result<Self> {
        let min_step = (upper - lower) / MAX_GRID_POINTS;
        Self::new(lower, upper, step.max(min_step * (1.0 + 1e-12)))
    }

    pub fn len(&self) -> usize {
        ((self.upper - self.lower) / self.step).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> f64 {
        self.lower + k as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub(crate) fn require_resolution(&self) -> Result<()> {
        let len = self.len();
        if len < MIN_GRID_POINTS {
            return Err(IvError::GridTooCoarse(len));
        }
        Ok(())
    }
}
