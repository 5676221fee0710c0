//! 4th-order centered finite differences on periodic grids and
//! order-fixed reductions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::PeriodicGrid;

/// Applies the 5-point centered stencil for `∂/∂q^axis` (`order` 1) or
/// `∂²/∂(q^axis)²` (`order` 2) to each of the `comps` interleaved components.
pub fn partial(
    grid: &PeriodicGrid,
    data: &[f64],
    comps: usize,
    axis: usize,
    order: u8,
) -> Result<Vec<f64>> {
    if axis >= grid.dim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dim: grid.dim(),
        });
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidArgument(format!("derivative order {order} not in {{1, 2}}")));
    }
    debug_assert_eq!(data.len(), grid.len() * comps);
    let h = grid.spacing();
    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(comps).enumerate().for_each(|(p, o)| {
        let m2 = grid.shifted(p, axis, -2) * comps;
        let m1 = grid.shifted(p, axis, -1) * comps;
        let p1 = grid.shifted(p, axis, 1) * comps;
        let p2 = grid.shifted(p, axis, 2) * comps;
        let c0 = p * comps;
        if order == 1 {
            let scale = 1.0 / (12.0 * h);
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = ((data[m2 + c] - data[p2 + c]) + 8.0 * (data[p1 + c] - data[m1 + c])) * scale;
            }
        } else {
            let scale = 1.0 / (12.0 * h * h);
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = (16.0 * (data[m1 + c] + data[p1 + c])
                    - (data[m2 + c] + data[p2 + c])
                    - 30.0 * data[c0 + c])
                    * scale;
            }
        }
    });
    Ok(out)
}

/// `∂field/∂q^axis` (order 1) or the pure second partial (order 2).
pub fn fd_partial(field: &ScalarField, axis: usize, order: u8) -> Result<ScalarField> {
    field.partial(axis, order)
}

/// Pairwise summation in a fixed order, independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

pub fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
