use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `(R/2πZ)^n` with `N` points per axis.
///
/// Points are stored row-major with axis 0 slowest, so the flat index of
/// `(i_0, …, i_{n-1})` is `Σ i_a N^{n-1-a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    points_per_axis: usize,
    spacing: f64,
}

impl PeriodicGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if points_per_axis < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{points_per_axis} points per axis, need at least {}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self {
            dim,
            points_per_axis,
            spacing: 2.0 * PI / points_per_axis as f64,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points `N^n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^n` in coordinate units.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, point: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rest = point;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.points_per_axis;
            rest /= self.points_per_axis;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.points_per_axis + i % self.points_per_axis)
    }

    /// Coordinates `q` of a grid point (unused trailing slots are zero).
    pub fn coords(&self, point: usize) -> [f64; 3] {
        let idx = self.multi_index(point);
        let mut q = [0.0; 3];
        for a in 0..self.dim {
            q[a] = idx[a] as f64 * self.spacing;
        }
        q
    }

    /// Flat index of the point displaced by `shift` along `axis`, wrapping.
    #[inline]
    pub fn shifted(&self, point: usize, axis: usize, shift: isize) -> usize {
        let stride = self.stride(axis);
        let n = self.points_per_axis as isize;
        let i = ((point / stride) % self.points_per_axis) as isize;
        let j = (i + shift).rem_euclid(n);
        (point as isize + (j - i) * stride as isize) as usize
    }

    /// The same grid with twice as many points per axis.
    pub fn refined(&self) -> Self {
        Self::new(self.dim, self.points_per_axis * 2).expect("refinement of a valid grid is valid")
    }

    pub fn ensure_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "n={} N={} vs n={} N={}",
                self.dim, self.points_per_axis, other.dim, other.points_per_axis
            )))
        }
    }
}
