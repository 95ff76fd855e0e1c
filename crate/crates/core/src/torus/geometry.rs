use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Periodic grid on the real torus `R^{2n} / (2πZ)^{2n}` underlying `T^n`.
///
/// Complex coordinates are `z_i = x_{2i-1} + √-1 x_{2i}` for `1 <= i <= n`.
/// Only the real axes listed in `active_axes` carry grid points; fields are
/// constant along every other axis, which still contributes its full period
/// to integrals. Axis and direction indices are 1-based throughout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusGeometry {
    n: usize,
    active_axes: Vec<usize>,
    grid_shape: Vec<usize>,
}

impl TorusGeometry {
    pub fn new(n: usize, active_axes: Vec<usize>, grid_shape: Vec<usize>) -> Result<Self> {
        if n < 3 {
            return Err(Error::Geometry(format!("complex dimension {n} < 3")));
        }
        if active_axes.is_empty() {
            return Err(Error::Geometry("no active axes".into()));
        }
        if active_axes.len() != grid_shape.len() {
            return Err(Error::Geometry(format!(
                "{} active axes but {} grid sizes",
                active_axes.len(),
                grid_shape.len()
            )));
        }
        if active_axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Geometry(format!(
                "active axes {active_axes:?} not strictly increasing"
            )));
        }
        if let Some(&a) = active_axes.iter().find(|&&a| a == 0 || a > 2 * n) {
            return Err(Error::Geometry(format!("axis {a} outside 1..={}", 2 * n)));
        }
        if let Some(&s) = grid_shape.iter().find(|&&s| s < 8 || s % 2 != 0) {
            return Err(Error::Geometry(format!(
                "grid size {s} must be even and at least 8"
            )));
        }
        Ok(Self {
            n,
            active_axes,
            grid_shape,
        })
    }

    /// One active axis with `size` points.
    pub fn line(n: usize, axis: usize, size: usize) -> Result<Self> {
        Self::new(n, vec![axis], vec![size])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn active_axes(&self) -> &[usize] {
        &self.active_axes
    }

    pub fn grid_shape(&self) -> &[usize] {
        &self.grid_shape
    }

    pub fn len(&self) -> usize {
        self.grid_shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of a real axis within `active_axes`.
    pub fn axis_slot(&self, axis: usize) -> Option<usize> {
        self.active_axes.iter().position(|&a| a == axis)
    }

    /// True if either real axis of complex direction `i` is active.
    pub fn direction_active(&self, i: usize) -> bool {
        self.axis_slot(2 * i - 1).is_some() || self.axis_slot(2 * i).is_some()
    }

    /// Complex directions with at least one active real axis.
    pub fn active_directions(&self) -> Vec<usize> {
        (1..=self.n).filter(|&i| self.direction_active(i)).collect()
    }

    pub fn check_direction(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::DirectionOutOfRange { index: i, n: self.n });
        }
        Ok(())
    }

    /// Multi-index (one entry per active axis) of a flat row-major index.
    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.grid_shape.len()];
        for (slot, &size) in self.grid_shape.iter().enumerate().rev() {
            out[slot] = index % size;
            index /= size;
        }
        out
    }

    /// Real coordinates `x_1..x_{2n}` of a grid point; inactive axes read 0.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; 2 * self.n];
        for (slot, c) in self.coords(index).into_iter().enumerate() {
            x[self.active_axes[slot] - 1] = 2.0 * PI * c as f64 / self.grid_shape[slot] as f64;
        }
        x
    }

    /// Volume `(2π)^{2n}` of the torus in the measure `dx_1 ... dx_{2n}`.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(2 * self.n as i32)
    }

    /// Row-major strides of the active grid.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.grid_shape.len()];
        for slot in (0..self.grid_shape.len().saturating_sub(1)).rev() {
            strides[slot] = strides[slot + 1] * self.grid_shape[slot + 1];
        }
        strides
    }
}
