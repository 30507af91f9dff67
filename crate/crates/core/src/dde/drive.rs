use crate::error::{Error, Result};

use super::params::grid_steps;

/// Piecewise-constant injection `I(t) g(t)`, one value per segment of length `theta`
/// starting at `start`. Zero outside the covered interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSignal {
    pub start: f64,
    pub theta: f64,
    pub values: Vec<f64>,
}

impl DriveSignal {
    pub fn new(start: f64, theta: f64, values: Vec<f64>) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", "must be positive and finite"));
        }
        if !start.is_finite() {
            return Err(Error::param("start", "must be finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("drive values"));
        }
        Ok(Self {
            start,
            theta,
            values,
        })
    }

    pub fn zero() -> Self {
        Self {
            start: 0.0,
            theta: 1.0,
            values: Vec::new(),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.theta * self.values.len() as f64
    }

    /// Value on `[start + k theta, start + (k + 1) theta)`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < self.start {
            return 0.0;
        }
        let k = ((t - self.start) / self.theta).floor() as usize;
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// Step-indexed view for an integrator with step `dt`.
    pub(crate) fn on_grid(&self, dt: f64) -> Result<GridDrive<'_>> {
        Ok(GridDrive {
            start_step: grid_steps(self.start, dt)?,
            steps_per_segment: grid_steps(self.theta, dt)?.max(1),
            values: &self.values,
        })
    }
}

pub(crate) struct GridDrive<'a> {
    start_step: usize,
    steps_per_segment: usize,
    values: &'a [f64],
}

impl GridDrive<'_> {
    #[inline]
    pub(crate) fn at_step(&self, step: usize) -> f64 {
        if step < self.start_step {
            return 0.0;
        }
        let k = (step - self.start_step) / self.steps_per_segment;
        self.values.get(k).copied().unwrap_or(0.0)
    }
}
