//! Numerical laboratory for the generalized Lagrangian mean curvature flow of
//! closed 1-form graphs in the cotangent bundle of a flat torus `(R/2πZ)^n`
//! carrying an arbitrary smooth periodic metric.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`field`], [`stencil`], [`linalg`], [`trig`]: periodic grids,
//!   tensor fields, 4th-order finite differences, small dense linear algebra
//!   and trigonometric polynomials.
//! * [`metric`], [`covariant`]: the base metric with its Christoffel symbols
//!   and curvature, and covariant derivatives of tensor fields.
//! * [`angle`]: the graph of a closed 1-form, its induced metric and its
//!   Lagrangian angle.
//! * [`flow`]: time integration of `∂u/∂t = θ(χ̂ + du)` and of the linear
//!   companion equation `∂v/∂t = η^{ij} v_ij`.
//! * [`monitors`]: per-slice diagnostics, evolution-identity residuals,
//!   oscillation series and decay fits.
//! * [`config`], [`checkpoint`], [`output`], [`scenarios`]: the experiment
//!   runner behind the `glmcf` binary.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod checkpoint;
pub mod config;
pub mod covariant;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod monitors;
pub mod output;
pub mod scenarios;
pub mod stencil;
pub mod trig;

pub use error::{Error, Result};
pub use field::{CovectorField, ScalarField, SymTensorField, TensorField, ThirdTensorField};
pub use grid::PeriodicGrid;
