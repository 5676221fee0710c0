//! Smooth periodic metrics on the torus with their Christoffel symbols and
//! curvature.
//!
//! Curvature convention: `R(∂_k, ∂_l)∂_j = D_k D_l ∂_j − D_l D_k ∂_j = R^i_{jkl} ∂_i`,
//! so `R^i_{jkl} = ∂_k Γ^i_{jl} − ∂_l Γ^i_{jk} + Γ^i_{pk} Γ^p_{jl} − Γ^i_{pl} Γ^p_{jk}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{offset, ScalarField, SymTensorField, TensorField};
use crate::grid::PeriodicGrid;
use crate::linalg::{self, Mat3};
use crate::trig::TrigPoly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricFamily {
    /// `g = δ`.
    Flat,
    /// `g = e^{2f} δ`.
    Conformal { f: TrigPoly },
    /// `g = diag(d_1, …, d_n)`; positivity of every `d_i` is checked on the grid.
    Diagonal { d: Vec<TrigPoly> },
}

impl std::fmt::Display for MetricFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricFamily::Flat => write!(f, "flat"),
            MetricFamily::Conformal { f: c } => write!(f, "conformal, f = {c}"),
            MetricFamily::Diagonal { d } => {
                let parts: Vec<String> = d.iter().map(|x| x.to_string()).collect();
                write!(f, "diagonal, d = [{}]", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// Metric derivatives from the family's closed form.
    #[default]
    Analytic,
    /// Metric derivatives from 4th-order stencils on the sampled metric.
    Stencil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    #[serde(flatten)]
    pub family: MetricFamily,
    #[serde(default)]
    pub derivatives: DerivativeSource,
}

impl MetricSpec {
    pub fn flat() -> Self {
        Self {
            family: MetricFamily::Flat,
            derivatives: DerivativeSource::Analytic,
        }
    }

    pub fn conformal(f: TrigPoly) -> Self {
        Self {
            family: MetricFamily::Conformal { f },
            derivatives: DerivativeSource::Analytic,
        }
    }

    pub fn diagonal(d: Vec<TrigPoly>) -> Self {
        Self {
            family: MetricFamily::Diagonal { d },
            derivatives: DerivativeSource::Analytic,
        }
    }

    pub fn with_derivatives(mut self, src: DerivativeSource) -> Self {
        self.derivatives = src;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let check = |p: &TrigPoly| match p.max_axis() {
            Some(a) if a >= dim => Err(Error::Config(format!(
                "metric expression {p} uses q{} but n = {dim}",
                a + 1
            ))),
            _ => Ok(()),
        };
        match &self.family {
            MetricFamily::Flat => Ok(()),
            MetricFamily::Conformal { f } => check(f),
            MetricFamily::Diagonal { d } => {
                if d.len() != dim {
                    return Err(Error::Config(format!(
                        "diagonal metric needs {dim} entries, got {}",
                        d.len()
                    )));
                }
                d.iter().try_for_each(check)
            }
        }
    }

    /// `g_ij`, `∂_m g_ij` and `∂_m ∂_l g_ij` at a point.
    fn jets(&self, q: &[f64; 3], n: usize) -> (Mat3, [Mat3; 3], [[Mat3; 3]; 3]) {
        let mut g = [[0.0; 3]; 3];
        let mut dg = [[[0.0; 3]; 3]; 3];
        let mut ddg = [[[[0.0; 3]; 3]; 3]; 3];
        match &self.family {
            MetricFamily::Flat => {
                for (i, row) in g.iter_mut().enumerate().take(n) {
                    row[i] = 1.0;
                }
            }
            MetricFamily::Conformal { f } => {
                let j = f.jet(q);
                let e = (2.0 * j.value).exp();
                for i in 0..n {
                    g[i][i] = e;
                    for m in 0..n {
                        dg[m][i][i] = 2.0 * j.grad[m] * e;
                        for l in 0..n {
                            ddg[m][l][i][i] = (4.0 * j.grad[m] * j.grad[l] + 2.0 * j.hess[m][l]) * e;
                        }
                    }
                }
            }
            MetricFamily::Diagonal { d } => {
                for i in 0..n {
                    let j = d[i].jet(q);
                    g[i][i] = j.value;
                    for m in 0..n {
                        dg[m][i][i] = j.grad[m];
                        for l in 0..n {
                            ddg[m][l][i][i] = j.hess[m][l];
                        }
                    }
                }
            }
        }
        (g, dg, ddg)
    }
}

/// A metric sampled on a periodic grid together with its derived tensors.
///
/// Storage layouts: `christoffel` holds `Γ^k_ij` at `(k, i, j)`,
/// `christoffel_deriv` holds `∂_m Γ^k_ij` at `(k, i, j, m)`, `riemann` holds
/// `R^i_{jkl}` at `(i, j, k, l)` and `riemann_lowered` holds
/// `R_{ijkl} = g_{im} R^m_{jkl}`.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub spec: MetricSpec,
    grid: PeriodicGrid,
    pub g: SymTensorField,
    pub g_inv: SymTensorField,
    pub g_inv_sqrt: SymTensorField,
    pub sqrt_det_g: ScalarField,
    pub christoffel: TensorField,
    pub christoffel_deriv: TensorField,
    pub riemann: TensorField,
    pub riemann_lowered: TensorField,
    min_eigenvalue: f64,
    sup_inv_eigenvalue: f64,
}

/// Samples `spec` on `grid` and derives `g^{-1}`, `√det g`, `Γ`, `∂Γ` and `Rm`.
pub fn build_metric(spec: &MetricSpec, grid: PeriodicGrid) -> Result<MetricField> {
    let n = grid.dim();
    spec.validate(n)?;
    let np = grid.len();

    let jets: Vec<_> = (0..np)
        .into_par_iter()
        .map(|p| spec.jets(&grid.coords(p), n))
        .collect();

    let g = TensorField::from_point_fn(grid, 2, |p, c| linalg::write_slice(&jets[p].0, n, c));

    // positivity, inverse, inverse square root
    // (inverse, inverse square root, sqrt det, min eigenvalue, max inverse eigenvalue)
    type PointData = (Mat3, Mat3, f64, f64, f64);
    let per_point: Vec<Result<PointData>> = (0..np)
        .into_par_iter()
        .map(|p| {
            let gm = jets[p].0;
            let (s, min_eig) = linalg::inv_sqrt_spd(&gm, n).ok_or_else(|| {
                let min = linalg::sym_eigen(&gm, n)
                    .map(|(e, _)| e[..n].iter().copied().fold(f64::INFINITY, f64::min))
                    .unwrap_or(f64::NAN);
                Error::NonPositiveMetric {
                    point: p,
                    min_eigenvalue: min,
                }
            })?;
            let inv = linalg::inverse(&gm, n).ok_or(Error::Singular { point: p })?;
            let det = linalg::det(&gm, n);
            let (ie, _) = linalg::sym_eigen(&inv, n).ok_or(Error::JacobiNoConvergence { point: p })?;
            let max_inv = ie[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((inv, s, det.sqrt(), min_eig, max_inv))
        })
        .collect();
    let mut inv_data = Vec::with_capacity(np);
    for r in per_point {
        inv_data.push(r?);
    }
    let g_inv = TensorField::from_point_fn(grid, 2, |p, c| linalg::write_slice(&inv_data[p].0, n, c));
    let g_inv_sqrt = TensorField::from_point_fn(grid, 2, |p, c| linalg::write_slice(&inv_data[p].1, n, c));
    let sqrt_det_g = TensorField::from_vec(grid, 0, inv_data.iter().map(|x| x.2).collect());
    let min_eigenvalue = inv_data.iter().map(|x| x.3).fold(f64::INFINITY, f64::min);
    let sup_inv_eigenvalue = inv_data.iter().map(|x| x.4).fold(f64::NEG_INFINITY, f64::max);

    let (christoffel, christoffel_deriv) = match spec.derivatives {
        DerivativeSource::Analytic => analytic_christoffel(&jets, &g_inv, grid),
        DerivativeSource::Stencil => stencil_christoffel(&g, &g_inv, grid)?,
    };
    let riemann = riemann_from_christoffel(&christoffel, &christoffel_deriv);
    let riemann_lowered = TensorField::from_point_fn(grid, 4, |p, c| {
        let gp = g.at(p);
        let r = riemann.at(p);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += gp[i * n + m] * r[offset(n, &[m, j, k, l])];
                        }
                        c[offset(n, &[i, j, k, l])] = s;
                    }
                }
            }
        }
    });

    Ok(MetricField {
        spec: spec.clone(),
        grid,
        g,
        g_inv,
        g_inv_sqrt,
        sqrt_det_g,
        christoffel,
        christoffel_deriv,
        riemann,
        riemann_lowered,
        min_eigenvalue,
        sup_inv_eigenvalue,
    })
}

fn christoffel_from_first(ginv: &[f64], dg: &dyn Fn(usize, usize, usize) -> f64, n: usize, out: &mut [f64]) {
    // Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij), dg(m, i, j) = ∂_m g_ij
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[k * n + l] * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j));
                }
                out[offset(n, &[k, i, j])] = 0.5 * s;
            }
        }
    }
}

type Jets = (Mat3, [Mat3; 3], [[Mat3; 3]; 3]);

fn analytic_christoffel(jets: &[Jets], g_inv: &TensorField, grid: PeriodicGrid) -> (TensorField, TensorField) {
    let n = grid.dim();
    let gamma = TensorField::from_point_fn(grid, 3, |p, c| {
        let dg = &jets[p].1;
        christoffel_from_first(g_inv.at(p), &|m, i, j| dg[m][i][j], n, c);
    });
    let dgamma = TensorField::from_point_fn(grid, 4, |p, c| {
        let (_, dg, ddg) = &jets[p];
        let ginv = g_inv.at(p);
        for m in 0..n {
            // ∂_m g^{kl} = −g^{ka} ∂_m g_ab g^{bl}
            let mut dginv = [[0.0; 3]; 3];
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            s -= ginv[k * n + a] * dg[m][a][b] * ginv[b * n + l];
                        }
                    }
                    dginv[k][l] = s;
                }
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            let first = dg[i][j][l] + dg[j][i][l] - dg[l][i][j];
                            let second = ddg[m][i][j][l] + ddg[m][j][i][l] - ddg[m][l][i][j];
                            s += dginv[k][l] * first + ginv[k * n + l] * second;
                        }
                        c[offset(n, &[k, i, j, m])] = 0.5 * s;
                    }
                }
            }
        }
    });
    (gamma, dgamma)
}

fn stencil_christoffel(g: &TensorField, g_inv: &TensorField, grid: PeriodicGrid) -> Result<(TensorField, TensorField)> {
    let n = grid.dim();
    let dg: Vec<TensorField> = (0..n).map(|m| g.partial(m, 1)).collect::<Result<_>>()?;
    let gamma = TensorField::from_point_fn(grid, 3, |p, c| {
        christoffel_from_first(g_inv.at(p), &|m, i, j| dg[m].at(p)[i * n + j], n, c);
    });
    let dgam: Vec<TensorField> = (0..n).map(|m| gamma.partial(m, 1)).collect::<Result<_>>()?;
    let dgamma = TensorField::from_point_fn(grid, 4, |p, c| {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for m in 0..n {
                        c[offset(n, &[k, i, j, m])] = dgam[m].at(p)[offset(n, &[k, i, j])];
                    }
                }
            }
        }
    });
    Ok((gamma, dgamma))
}

fn riemann_from_christoffel(gamma: &TensorField, dgamma: &TensorField) -> TensorField {
    let grid = *gamma.grid();
    let n = grid.dim();
    TensorField::from_point_fn(grid, 4, |p, c| {
        let gm = gamma.at(p);
        let dgm = dgamma.at(p);
        let gam = |k: usize, i: usize, j: usize| gm[offset(n, &[k, i, j])];
        let dgam = |k: usize, i: usize, j: usize, m: usize| dgm[offset(n, &[k, i, j, m])];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut s = dgam(i, j, l, k) - dgam(i, j, k, l);
                        for q in 0..n {
                            s += gam(i, q, k) * gam(q, j, l) - gam(i, q, l) * gam(q, j, k);
                        }
                        c[offset(n, &[i, j, k, l])] = s;
                    }
                }
            }
        }
    })
}

impl MetricField {
    #[inline]
    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Smallest eigenvalue of `g` over the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `sup_x λ_max(g^{-1}(x))`.
    pub fn sup_inverse_eigenvalue(&self) -> f64 {
        self.sup_inv_eigenvalue
    }

    #[inline]
    pub fn gamma(&self, p: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.dim();
        self.christoffel.at(p)[offset(n, &[k, i, j])]
    }

    /// `R^i_{jkl}` at a point.
    #[inline]
    pub fn riemann_at(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim();
        self.riemann.at(p)[offset(n, &[i, j, k, l])]
    }

    /// Sectional curvature of the coordinate plane `(a, b)` at a point:
    /// `⟨R(∂_a, ∂_b)∂_b, ∂_a⟩ / (g_aa g_bb − g_ab²)`.
    pub fn sectional_curvature(&self, p: usize, a: usize, b: usize) -> f64 {
        let n = self.dim();
        let g = self.g.at(p);
        let num = self.riemann_lowered.at(p)[offset(n, &[a, b, a, b])];
        num / (g[a * n + a] * g[b * n + b] - g[a * n + b] * g[b * n + a])
    }

    /// Total volume `Σ √det g · h^n`.
    pub fn volume(&self) -> f64 {
        crate::stencil::pairwise_sum(self.sqrt_det_g.data()) * self.grid.cell_volume()
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.spec.family, MetricFamily::Flat)
    }
}
