//! The graph of a closed 1-form: assembly, induced metric and Lagrangian angle.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::covariant::{covariant_derivative, covariant_hessian, gradient};
use crate::error::{Error, Result};
use crate::field::{offset, CovectorField, ScalarField, SymTensorField, TensorField};
use crate::linalg::{self, Mat3};
use crate::metric::MetricField;

/// A closed 1-form `χ = c·dq + dφ̂ + du` on the grid, at flow time `t`.
///
/// `anchor` is `u(0)` at the origin grid point, recorded when the flow starts.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub harmonic: Vec<f64>,
    pub base_potential: ScalarField,
    pub u: ScalarField,
    pub t: f64,
    pub anchor: f64,
}

impl GraphState {
    /// State with `u = u0`, anchor taken from `u0` at the origin.
    pub fn new(harmonic: Vec<f64>, base_potential: ScalarField, u0: ScalarField) -> Result<Self> {
        base_potential.grid().ensure_same(u0.grid())?;
        if harmonic.len() != u0.dim() {
            return Err(Error::InvalidArgument(format!(
                "harmonic part has {} components, grid dimension is {}",
                harmonic.len(),
                u0.dim()
            )));
        }
        let anchor = u0.value(0);
        Ok(Self {
            harmonic,
            base_potential,
            u: u0,
            t: 0.0,
            anchor,
        })
    }

    /// Harmonic form `c·dq` with zero potentials.
    pub fn harmonic_only(grid: crate::grid::PeriodicGrid, c: Vec<f64>) -> Result<Self> {
        Self::new(c, ScalarField::zeros(grid, 0), ScalarField::zeros(grid, 0))
    }

    pub fn grid(&self) -> &crate::grid::PeriodicGrid {
        self.u.grid()
    }

    /// `φ̂ + u`.
    pub fn total_potential(&self) -> ScalarField {
        self.base_potential.add(&self.u)
    }

    pub fn with_u(&self, u: ScalarField, t: f64) -> Self {
        Self {
            harmonic: self.harmonic.clone(),
            base_potential: self.base_potential.clone(),
            u,
            t,
            anchor: self.anchor,
        }
    }

    /// The reference form `χ̂ = c·dq + dφ̂` as a state with `u = 0`.
    pub fn reference(&self) -> Self {
        self.with_u(ScalarField::zeros(*self.grid(), 0), self.t)
    }
}

/// `χ_i = c_i + ∂_i φ̂ + ∂_i u`.
pub fn assemble_chi(state: &GraphState, metric: &MetricField) -> Result<CovectorField> {
    state.grid().ensure_same(metric.grid())?;
    let mut chi = gradient(&state.total_potential())?;
    let n = state.grid().dim();
    chi.data_mut()
        .par_chunks_mut(n)
        .for_each(|c| c.iter_mut().zip(&state.harmonic).for_each(|(x, ci)| *x += ci));
    Ok(chi)
}

/// `χ_{j,i}` of the state: the covariant Hessian of `φ̂ + u` minus `Γ^k_ij c_k`.
///
/// Exactly symmetric; uses the compact second-derivative stencil on the diagonal.
pub fn chi_prime(state: &GraphState, metric: &MetricField) -> Result<SymTensorField> {
    let mut h = covariant_hessian(&state.total_potential(), metric)?;
    let n = state.grid().dim();
    if state.harmonic.iter().any(|&c| c != 0.0) {
        let c = &state.harmonic;
        h.data_mut().par_chunks_mut(n * n).enumerate().for_each(|(p, out)| {
            let gm = metric.christoffel.at(p);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += gm[offset(n, &[k, i, j])] * c[k];
                    }
                    out[i * n + j] -= s;
                }
            }
        });
    }
    Ok(h)
}

/// `η_ij = g_ij + χ_{k,i} g^{kl} χ_{l,j}` and its inverse.
pub fn induced_metric(chi_prime: &SymTensorField, metric: &MetricField) -> Result<(SymTensorField, SymTensorField)> {
    let grid = *chi_prime.grid();
    grid.ensure_same(metric.grid())?;
    let n = grid.dim();
    let eta = TensorField::from_point_fn(grid, 2, |p, out| {
        let g = metric.g.at(p);
        let gi = metric.g_inv.at(p);
        let a = chi_prime.at(p);
        for i in 0..n {
            for j in 0..n {
                let mut s = g[i * n + j];
                for k in 0..n {
                    for l in 0..n {
                        s += a[k * n + i] * gi[k * n + l] * a[l * n + j];
                    }
                }
                out[i * n + j] = s;
            }
        }
    });
    let inv: Vec<Option<Mat3>> = (0..grid.len())
        .into_par_iter()
        .map(|p| linalg::inverse(&linalg::from_slice(eta.at(p), n), n))
        .collect();
    if let Some(p) = inv.iter().position(Option::is_none) {
        return Err(Error::Singular { point: p });
    }
    let eta_inv = TensorField::from_point_fn(grid, 2, |p, out| {
        linalg::write_slice(inv[p].as_ref().expect("checked above"), n, out)
    });
    Ok((eta, eta_inv))
}

/// Per-point angle data.
struct PointAngle {
    theta: f64,
    residual: f64,
    lambda_max: f64,
    eigen_product: f64,
}

fn point_angle(p: usize, g: &Mat3, s: &Mat3, a: &Mat3, eta: &Mat3, n: usize) -> Result<PointAngle> {
    let b = linalg::mul(&linalg::mul(s, a, n), s, n);
    let (lam, _) = linalg::sym_eigen(&b, n).ok_or(Error::JacobiNoConvergence { point: p })?;
    let theta: f64 = lam[..n].iter().map(|l| l.atan()).sum();
    let lambda_max = lam[..n].iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let eigen_product = lam[..n].iter().map(|l| 1.0 + l * l).product();
    let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..n {
        for j in 0..n {
            z[i][j] = Complex64::new(g[i][j], a[i][j]);
        }
    }
    let rhs = linalg::complex_det(&z, n) / (linalg::det(g, n).sqrt() * linalg::det(eta, n).sqrt());
    let residual = (Complex64::from_polar(1.0, theta) - rhs).norm();
    Ok(PointAngle {
        theta,
        residual,
        lambda_max,
        eigen_product,
    })
}

fn angle_points(chi_prime: &SymTensorField, eta: &SymTensorField, metric: &MetricField) -> Result<Vec<PointAngle>> {
    let grid = *chi_prime.grid();
    let n = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            point_angle(
                p,
                &linalg::from_slice(metric.g.at(p), n),
                &linalg::from_slice(metric.g_inv_sqrt.at(p), n),
                &linalg::from_slice(chi_prime.at(p), n),
                &linalg::from_slice(eta.at(p), n),
                n,
            )
        })
        .collect()
}

/// `θ = Σ arctan λ_i` with `λ` the eigenvalues of `g^{-1/2} χ′ g^{-1/2}`, and
/// the sup over the grid of `|e^{iθ} − det(g + iχ′)/(√det g √det η)|`.
pub fn lagrangian_angle(chi_prime: &SymTensorField, metric: &MetricField) -> Result<(ScalarField, f64)> {
    let (eta, _) = induced_metric(chi_prime, metric)?;
    let pts = angle_points(chi_prime, &eta, metric)?;
    let theta = TensorField::from_vec(*chi_prime.grid(), 0, pts.iter().map(|a| a.theta).collect());
    let residual = pts.iter().fold(0.0f64, |m, a| m.max(a.residual));
    Ok((theta, residual))
}

/// Everything per time slice about the graph of a state.
#[derive(Debug, Clone)]
pub struct AngleBundle {
    pub chi_prime: SymTensorField,
    pub eta: SymTensorField,
    pub eta_inv: SymTensorField,
    pub theta: ScalarField,
    pub branch_residual: f64,
    /// Largest `|λ_i|` over the grid.
    pub lambda_max: f64,
    /// `sup_x Π(1 + λ_i²)`.
    pub eigen_product_max: f64,
}

impl AngleBundle {
    pub fn compute(state: &GraphState, metric: &MetricField) -> Result<Self> {
        let chi_prime = chi_prime(state, metric)?;
        Self::from_chi_prime(chi_prime, metric)
    }

    pub fn from_chi_prime(chi_prime: SymTensorField, metric: &MetricField) -> Result<Self> {
        let (eta, eta_inv) = induced_metric(&chi_prime, metric)?;
        let pts = angle_points(&chi_prime, &eta, metric)?;
        let theta = TensorField::from_vec(*chi_prime.grid(), 0, pts.iter().map(|a| a.theta).collect());
        let fold = |f: fn(&PointAngle) -> f64| pts.iter().map(f).fold(0.0f64, f64::max);
        Ok(Self {
            branch_residual: fold(|a| a.residual),
            lambda_max: fold(|a| a.lambda_max),
            eigen_product_max: fold(|a| a.eigen_product),
            chi_prime,
            eta,
            eta_inv,
            theta,
        })
    }

    /// Smallest eigenvalue of `g^{-1/2} η g^{-1/2}` over the grid.
    pub fn min_eta_over_g(&self, metric: &MetricField) -> f64 {
        let n = metric.dim();
        (0..metric.grid().len())
            .into_par_iter()
            .map(|p| {
                let s = linalg::from_slice(metric.g_inv_sqrt.at(p), n);
                let e = linalg::from_slice(self.eta.at(p), n);
                let b = linalg::mul(&linalg::mul(&s, &e, n), &s, n);
                linalg::sym_eigen(&b, n)
                    .map(|(l, _)| l[..n].iter().copied().fold(f64::INFINITY, f64::min))
                    .unwrap_or(f64::NAN)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }
}

/// `sup_{x,k} |∂_k θ − η^{pq} χ_{p,qk}|`.
pub fn angle_gradient_residual(theta: &ScalarField, chi_prime: &SymTensorField, metric: &MetricField) -> Result<f64> {
    let grid = *theta.grid();
    let n = grid.dim();
    let (_, eta_inv) = induced_metric(chi_prime, metric)?;
    let dtheta = gradient(theta)?;
    let third = covariant_derivative(chi_prime, metric)?;
    let res = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let ei = eta_inv.at(p);
            let t = third.at(p);
            let mut worst: f64 = 0.0;
            for k in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += ei[a * n + b] * t[offset(n, &[a, b, k])];
                    }
                }
                worst = worst.max((dtheta.at(p)[k] - s).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(res)
}

/// `osc θ` of the state's graph.
pub fn special_lagrangian_residual(state: &GraphState, metric: &MetricField) -> Result<f64> {
    let cp = chi_prime(state, metric)?;
    let (theta, _) = lagrangian_angle(&cp, metric)?;
    Ok(theta.osc())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::metric::{build_metric, MetricSpec};
    use std::f64::consts::FRAC_PI_2;

    fn flat(n: usize, pts: usize) -> MetricField {
        build_metric(&MetricSpec::flat(), PeriodicGrid::new(n, pts).unwrap()).unwrap()
    }

    fn sine_state(m: &MetricField, amp: f64) -> GraphState {
        let grid = *m.grid();
        let u = ScalarField::from_fn(grid, |q| amp * q[0].sin());
        GraphState::new(vec![0.0; grid.dim()], ScalarField::zeros(grid, 0), u).unwrap()
    }

    #[test]
    fn zero_form_and_constant_harmonic() {
        let m = flat(2, 32);
        let s = GraphState::harmonic_only(*m.grid(), vec![0.3, 0.0]).unwrap();
        let chi = assemble_chi(&s, &m).unwrap();
        for p in 0..m.grid().len() {
            assert_eq!(chi.at(p), &[0.3, 0.0]);
        }
        let b = AngleBundle::compute(&s, &m).unwrap();
        assert!(b.theta.data().iter().all(|&x| x == 0.0));
        assert_eq!(b.branch_residual, 0.0);
        assert_eq!(b.eta, m.g);
    }

    #[test]
    fn one_dimensional_arctan_closed_form() {
        let m = flat(1, 64);
        let s = sine_state(&m, 0.1);
        let b = AngleBundle::compute(&s, &m).unwrap();
        let grid = *m.grid();
        let mut err: f64 = 0.0;
        for p in 0..grid.len() {
            let q = grid.coords(p)[0];
            err = err.max((b.theta.value(p) - (-0.1 * q.sin()).atan()).abs());
        }
        assert!(err < 1e-6);
        let p = grid.flat_index(&[16]);
        assert!((grid.coords(p)[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((b.theta.value(p) - (-0.0996687)).abs() < 1e-6);
        assert!((b.theta.osc() - 2.0 * 0.1f64.atan()).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_induced_metric() {
        let m = flat(1, 16);
        let cp = TensorField::from_point_fn(*m.grid(), 2, |_, c| c[0] = -0.1);
        let (eta, eta_inv) = induced_metric(&cp, &m).unwrap();
        assert!((eta.at(0)[0] - 1.01).abs() < 1e-15);
        assert!((eta_inv.at(0)[0] * 1.01 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_angle_is_arg_of_complex_determinant() {
        let m = flat(2, 16);
        let (a, b) = (0.7, -1.9);
        let cp = TensorField::from_point_fn(*m.grid(), 2, |_, c| c.copy_from_slice(&[a, 0.0, 0.0, b]));
        let (theta, res) = lagrangian_angle(&cp, &m).unwrap();
        let det = Complex64::new(1.0, a) * Complex64::new(1.0, b);
        assert!((theta.value(0) - det.arg()).abs() < 1e-15);
        assert!((theta.value(0) - (a.atan() + b.atan())).abs() < 1e-15);
        assert!(res < 1e-14);
    }

    #[test]
    fn angle_is_odd_in_one_dimension() {
        let m = flat(1, 32);
        let s = sine_state(&m, 0.3);
        let cp = chi_prime(&s, &m).unwrap();
        let (t1, _) = lagrangian_angle(&cp, &m).unwrap();
        let (t2, _) = lagrangian_angle(&cp.scale(-1.0), &m).unwrap();
        assert!(t1.data().iter().zip(t2.data()).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn gradient_identity_converges() {
        let res = |pts: usize| {
            let m = flat(1, pts);
            let s = sine_state(&m, 0.1);
            let b = AngleBundle::compute(&s, &m).unwrap();
            angle_gradient_residual(&b.theta, &b.chi_prime, &m).unwrap()
        };
        let (r1, r2) = (res(64), res(128));
        assert!(r2 <= 1e-6, "{r2}");
        assert!(r1 / r2 >= 12.0, "ratio {}", r1 / r2);
    }

    #[test]
    fn gauge_invariance() {
        let m = flat(2, 32);
        let s = sine_state(&m, 0.2);
        let shifted = s.with_u(s.u.add_scalar(3.0), 0.0);
        let a = AngleBundle::compute(&s, &m).unwrap();
        let b = AngleBundle::compute(&shifted, &m).unwrap();
        assert!(a.theta.sup_distance(&b.theta) < 1e-13);
    }

    #[test]
    fn special_lagrangian_residual_of_harmonic_form_is_zero() {
        let m = flat(2, 16);
        let s = GraphState::harmonic_only(*m.grid(), vec![0.4, -0.2]).unwrap();
        assert_eq!(special_lagrangian_residual(&s, &m).unwrap(), 0.0);
    }
}
