//! Levi-Civita covariant derivatives of grid tensor fields.
//!
//! For a covariant rank-`k` field the result has rank `k + 1` with the new
//! index last: `(DT)_{i_1…i_k m} = ∂_m T_{i_1…i_k} − Σ_a Γ^r_{m i_a} T_{…r…}`.
//! Hence `u_ij` is the Hessian and `u_ijk = D_k u_ij`.

use crate::error::{Error, Result};
use crate::field::{offset, CovectorField, ScalarField, SymTensorField, TensorField, ThirdTensorField};
use crate::metric::MetricField;

/// Covariant derivative of a covariant tensor field of any rank.
pub fn covariant_derivative(t: &TensorField, metric: &MetricField) -> Result<TensorField> {
    let grid = *t.grid();
    grid.ensure_same(metric.grid())?;
    let n = grid.dim();
    let k = t.rank();
    let partials: Vec<TensorField> = (0..n).map(|m| t.partial(m, 1)).collect::<Result<_>>()?;
    let comps_in = t.comps();
    let gamma = &metric.christoffel;
    Ok(TensorField::from_point_fn(grid, k + 1, |p, out| {
        let tp = t.at(p);
        let gm = gamma.at(p);
        let mut idx = [0usize; 8];
        for c in 0..comps_in {
            // decode multi-index of the input component
            let mut rem = c;
            for a in (0..k).rev() {
                idx[a] = rem % n;
                rem /= n;
            }
            for m in 0..n {
                let mut v = partials[m].at(p)[c];
                for a in 0..k {
                    let ia = idx[a];
                    let stride = n.pow((k - 1 - a) as u32);
                    let base = c - ia * stride;
                    for r in 0..n {
                        v -= gm[offset(n, &[r, m, ia])] * tp[base + r * stride];
                    }
                }
                out[c * n + m] = v;
            }
        }
    }))
}

/// `du` as a covector field.
pub fn gradient(u: &ScalarField) -> Result<CovectorField> {
    let grid = *u.grid();
    let n = grid.dim();
    let partials: Vec<ScalarField> = (0..n).map(|m| u.partial(m, 1)).collect::<Result<_>>()?;
    Ok(TensorField::from_point_fn(grid, 1, |p, c| {
        for (m, cm) in c.iter_mut().enumerate() {
            *cm = partials[m].value(p);
        }
    }))
}

/// Covariant Hessian `u_ij = ∂_i∂_j u − Γ^k_ij ∂_k u`, exactly symmetric.
///
/// Pure second partials use the 5-point second-derivative stencil; mixed
/// partials compose two first-derivative stencils.
pub fn covariant_hessian(u: &ScalarField, metric: &MetricField) -> Result<SymTensorField> {
    let grid = *u.grid();
    grid.ensure_same(metric.grid())?;
    let n = grid.dim();
    let first: Vec<ScalarField> = (0..n).map(|m| u.partial(m, 1)).collect::<Result<_>>()?;
    let mut second = vec![vec![None; n]; n];
    for i in 0..n {
        second[i][i] = Some(u.partial(i, 2)?);
        for j in (i + 1)..n {
            second[i][j] = Some(first[j].partial(i, 1)?);
        }
    }
    Ok(TensorField::from_point_fn(grid, 2, |p, c| {
        let gm = metric.christoffel.at(p);
        for i in 0..n {
            for j in i..n {
                let mut v = second[i][j].as_ref().map(|f| f.value(p)).unwrap_or(0.0);
                for k in 0..n {
                    v -= gm[offset(n, &[k, i, j])] * first[k].value(p);
                }
                c[i * n + j] = v;
                c[j * n + i] = v;
            }
        }
    }))
}

/// `u_ijk = D_k u_ij`.
pub fn covariant_third(u: &ScalarField, metric: &MetricField) -> Result<ThirdTensorField> {
    covariant_derivative(&covariant_hessian(u, metric)?, metric)
}

/// Tolerance for symmetry defects of stencil-differentiated closed forms.
pub fn stencil_tolerance(h: f64, scale: f64) -> f64 {
    h.powi(4) * scale.max(1.0) + 1e-12
}

/// `χ_{j,i}` of a closed 1-form, symmetrized, with the symmetry defect
/// `sup |χ_{j,i} − χ_{i,j}|` that was removed.
///
/// Fails when the defect exceeds ten times [`stencil_tolerance`].
pub fn oneform_covariant_derivative(chi: &CovectorField, metric: &MetricField) -> Result<(SymTensorField, f64)> {
    if chi.rank() != 1 {
        return Err(Error::InvalidArgument(format!("expected a 1-form, got rank {}", chi.rank())));
    }
    let grid = *chi.grid();
    let n = grid.dim();
    let d = covariant_derivative(chi, metric)?;
    let mut defect: f64 = 0.0;
    for p in 0..grid.len() {
        let dp = d.at(p);
        for i in 0..n {
            for j in (i + 1)..n {
                defect = defect.max((dp[i * n + j] - dp[j * n + i]).abs());
            }
        }
    }
    let limit = 10.0 * stencil_tolerance(grid.spacing(), chi.sup_abs());
    if defect > limit {
        return Err(Error::NonClosed { defect, limit });
    }
    let sym = TensorField::from_point_fn(grid, 2, |p, c| {
        let dp = d.at(p);
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = 0.5 * (dp[i * n + j] + dp[j * n + i]);
            }
        }
    });
    Ok((sym, defect))
}

/// Raises slot `slot` of `t` with the symmetric inverse metric `inv`.
pub fn raise_slot(t: &TensorField, slot: usize, inv: &SymTensorField) -> TensorField {
    let grid = *t.grid();
    let n = grid.dim();
    let k = t.rank();
    assert!(slot < k, "slot {slot} out of range for rank {k}");
    let stride = n.pow((k - 1 - slot) as u32);
    TensorField::from_point_fn(grid, k, |p, out| {
        let gi = inv.at(p);
        let s = t.at(p);
        for (c, o) in out.iter_mut().enumerate() {
            let i = (c / stride) % n;
            let base = c - i * stride;
            let mut v = 0.0;
            for r in 0..n {
                v += gi[i * n + r] * s[base + r * stride];
            }
            *o = v;
        }
    })
}

/// Raises every index of a covariant field with `g^{-1}`.
pub fn raise_all(t: &TensorField, metric: &MetricField) -> TensorField {
    (0..t.rank()).fold(t.clone(), |acc, slot| raise_slot(&acc, slot, &metric.g_inv))
}

/// Pointwise full contraction `Σ a_{I} b^{I}` of two same-rank fields.
pub fn contract(a: &TensorField, b: &TensorField) -> ScalarField {
    let grid = *a.grid();
    TensorField::from_point_fn(grid, 0, |p, out| {
        out[0] = a.at(p).iter().zip(b.at(p)).map(|(x, y)| x * y).sum();
    })
}

/// Pointwise squared `g`-norm of a covariant field.
pub fn norm_squared(t: &TensorField, metric: &MetricField) -> ScalarField {
    contract(t, &raise_all(t, metric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::metric::{build_metric, MetricSpec};
    use crate::trig::TrigPoly;

    fn metric(pts: usize) -> MetricField {
        let grid = PeriodicGrid::new(2, pts).unwrap();
        let spec = MetricSpec::diagonal(vec![
            "1 + 0.2*sin(q2)".parse().unwrap(),
            "1.2 + 0.1*cos(q1)*sin(q2)".parse().unwrap(),
        ]);
        build_metric(&spec, grid).unwrap()
    }

    fn sample_u(grid: PeriodicGrid) -> (TrigPoly, ScalarField) {
        let u: TrigPoly = "0.3*sin(q1)*cos(q2) + 0.1*cos(2*q1)".parse().unwrap();
        let f = u.sample(grid);
        (u, f)
    }

    #[test]
    fn hessian_matches_analytic_formula() {
        let m = metric(64);
        let grid = *m.grid();
        let (poly, u) = sample_u(grid);
        let hess = covariant_hessian(&u, &m).unwrap();
        let n = 2;
        let mut err: f64 = 0.0;
        for p in 0..grid.len() {
            let j = poly.jet(&grid.coords(p));
            for a in 0..n {
                for b in 0..n {
                    let mut exact = j.hess[a][b];
                    for k in 0..n {
                        exact -= m.gamma(p, k, a, b) * j.grad[k];
                    }
                    err = err.max((hess.at(p)[a * n + b] - exact).abs());
                }
            }
        }
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn flat_metric_reduces_to_partials() {
        let grid = PeriodicGrid::new(2, 32).unwrap();
        let m = build_metric(&MetricSpec::flat(), grid).unwrap();
        let (_, u) = sample_u(grid);
        let du = gradient(&u).unwrap();
        let d2 = covariant_derivative(&du, &m).unwrap();
        let dx = u.partial(0, 1).unwrap();
        let dxy = dx.partial(1, 1).unwrap();
        for p in 0..grid.len() {
            assert_eq!(d2.at(p)[1], dxy.value(p));
        }
    }

    #[test]
    fn metric_is_parallel() {
        let err = |pts: usize| {
            let m = metric(pts);
            covariant_derivative(&m.g, &m).unwrap().sup_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-6);
        assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn ricci_identity_for_the_hessian_converges() {
        // u_ijk − u_ikj = u_l R^l_ijk
        let err = |pts: usize| {
            let m = metric(pts);
            let grid = *m.grid();
            let (_, u) = sample_u(grid);
            let du = gradient(&u).unwrap();
            let t = covariant_third(&u, &m).unwrap();
            let n = 2;
            let mut e: f64 = 0.0;
            for p in 0..grid.len() {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let lhs = t.at(p)[offset(n, &[i, j, k])] - t.at(p)[offset(n, &[i, k, j])];
                            let rhs: f64 = (0..n).map(|l| du.at(p)[l] * m.riemann_at(p, l, i, j, k)).sum();
                            e = e.max((lhs - rhs).abs());
                        }
                    }
                }
            }
            e
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-5, "{e2}");
        assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn exact_differential_is_closed() {
        let m = metric(32);
        let (_, u) = sample_u(*m.grid());
        let du = gradient(&u).unwrap();
        let (_, defect) = oneform_covariant_derivative(&du, &m).unwrap();
        assert!(defect < 1e-13);
    }

    #[test]
    fn non_closed_form_is_rejected() {
        let m = metric(32);
        let grid = *m.grid();
        // χ = sin(q1) dq2 has dχ = cos(q1) dq1∧dq2
        let chi = TensorField::from_point_fn(grid, 1, |p, c| {
            c[0] = 0.0;
            c[1] = grid.coords(p)[0].sin();
        });
        assert!(matches!(
            oneform_covariant_derivative(&chi, &m),
            Err(Error::NonClosed { .. })
        ));
    }

    #[test]
    fn raising_then_contracting_recovers_norm() {
        let m = metric(32);
        let grid = *m.grid();
        let (_, u) = sample_u(grid);
        let du = gradient(&u).unwrap();
        let up = raise_all(&du, &m);
        for p in 0..grid.len() {
            let gi = m.g_inv.at(p);
            let d = du.at(p);
            let direct: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| gi[i * 2 + j] * d[i] * d[j]).sum();
            let via: f64 = (0..2).map(|i| up.at(p)[i] * d[i]).sum();
            assert!((direct - via).abs() < 1e-14);
        }
    }
}
