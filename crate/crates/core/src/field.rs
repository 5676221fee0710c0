//! Grid tensor fields with all indices covariant.
//!
//! A rank-`k` field stores `n^k` components per point, point-major. The
//! component of the multi-index `(i_1, …, i_k)` sits at `Σ i_a n^{k-a}`.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::PeriodicGrid;
use crate::stencil;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: PeriodicGrid,
    rank: usize,
    data: Vec<f64>,
}

/// Rank-0 field.
pub type ScalarField = TensorField;
/// Rank-1 covariant field `χ_i`.
pub type CovectorField = TensorField;
/// Rank-2 field symmetric in its two slots (`u_ij`, `η_ij`, `χ_{j,i}`).
pub type SymTensorField = TensorField;
/// Rank-3 field `u_ijk`, symmetric in `(i, j)` only.
pub type ThirdTensorField = TensorField;

impl TensorField {
    pub fn zeros(grid: PeriodicGrid, rank: usize) -> Self {
        let comps = grid.dim().pow(rank as u32);
        Self {
            grid,
            rank,
            data: vec![0.0; grid.len() * comps],
        }
    }

    pub fn from_vec(grid: PeriodicGrid, rank: usize, data: Vec<f64>) -> Self {
        let comps = grid.dim().pow(rank as u32);
        assert_eq!(data.len(), grid.len() * comps, "field length does not match grid and rank");
        Self { grid, rank, data }
    }

    /// Samples a scalar function of the coordinates.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|p| f(grid.coords(p)))
            .collect();
        Self { grid, rank: 0, data }
    }

    /// Samples a tensor-valued function; `f` fills the `n^rank` components.
    pub fn from_point_fn(
        grid: PeriodicGrid,
        rank: usize,
        f: impl Fn(usize, &mut [f64]) + Sync,
    ) -> Self {
        let mut out = Self::zeros(grid, rank);
        let comps = out.comps();
        out.data
            .par_chunks_mut(comps)
            .enumerate()
            .for_each(|(p, c)| f(p, c));
        out
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self {
            grid,
            rank: 0,
            data: vec![value; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Components per grid point.
    #[inline]
    pub fn comps(&self) -> usize {
        self.grid.dim().pow(self.rank as u32)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Components at one grid point.
    #[inline]
    pub fn at(&self, point: usize) -> &[f64] {
        let c = self.comps();
        &self.data[point * c..(point + 1) * c]
    }

    #[inline]
    pub fn at_mut(&mut self, point: usize) -> &mut [f64] {
        let c = self.comps();
        &mut self.data[point * c..(point + 1) * c]
    }

    /// Component `idx` (a multi-index of length `rank`) at a point.
    pub fn get(&self, point: usize, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.rank);
        let n = self.dim();
        let offset = idx.iter().fold(0, |acc, &i| acc * n + i);
        self.at(point)[offset]
    }

    /// Value of a scalar field at a point.
    #[inline]
    pub fn value(&self, point: usize) -> f64 {
        debug_assert_eq!(self.rank, 0);
        self.data[point]
    }

    pub fn ensure_compatible(&self, other: &TensorField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.rank != other.rank {
            return Err(crate::Error::GridMismatch(format!(
                "rank {} vs rank {}",
                self.rank, other.rank
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &TensorField, b: f64) -> TensorField {
        assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            grid: self.grid,
            rank: self.rank,
            data,
        }
    }

    pub fn add(&self, other: &TensorField) -> TensorField {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> TensorField {
        self.map(|x| a * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TensorField {
        Self {
            grid: self.grid,
            rank: self.rank,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> TensorField {
        self.map(|x| x + c)
    }

    pub fn max(&self) -> f64 {
        stencil::max(&self.data)
    }

    pub fn min(&self) -> f64 {
        stencil::min(&self.data)
    }

    /// `sup - inf` over all entries.
    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }

    /// Sup-norm over all entries.
    pub fn sup_abs(&self) -> f64 {
        stencil::sup_abs(&self.data)
    }

    pub fn sup_distance(&self, other: &TensorField) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Partial derivative of every component along `axis` (`order` 1 or 2).
    pub fn partial(&self, axis: usize, order: u8) -> Result<TensorField> {
        let data = stencil::partial(&self.grid, &self.data, self.comps(), axis, order)?;
        Ok(Self {
            grid: self.grid,
            rank: self.rank,
            data,
        })
    }
}

/// Flat component offset of a multi-index for dimension `n`.
#[inline]
pub fn offset(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}
