//! Discrete residuals of the evolution identities satisfied along the flow
//! by `θ`, `τ`, `ϑ`, `ρ` and `Θ`.
//!
//! A residual is `sup_x |∂_t Q − Δ_η Q − RHS|` at the middle state of a
//! three-state window, with `∂_t Q` a centered difference and
//! `Δ_η Q = η^{ij} Q_ij` (covariant Hessian with respect to `g`).

use crate::angle::{AngleBundle, GraphState};
use crate::covariant::{contract, covariant_derivative, covariant_hessian, norm_squared, raise_all, raise_slot};
use crate::error::{Error, Result};
use crate::field::{offset, ScalarField, TensorField};
use crate::metric::MetricField;

use super::{tau_field, upsilon_field, Jet};

/// Residual sup-norms; `None` when not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub vartheta: Option<f64>,
    pub rho: Option<f64>,
    pub bigtheta: Option<f64>,
}

impl Residuals {
    /// All five residuals for one window.
    pub fn compute(window: &LemmaWindow<'_>, metric: &MetricField, theta_hat: f64) -> Result<Self> {
        let ctx = Context::new(window, metric)?;
        Ok(Self {
            theta: Some(ctx.theta()?),
            tau: Some(ctx.tau(theta_hat)?),
            vartheta: Some(ctx.vartheta()?),
            rho: Some(ctx.rho(true)?),
            bigtheta: Some(ctx.bigtheta()?),
        })
    }

    pub fn as_array(&self) -> [Option<f64>; 5] {
        [self.theta, self.tau, self.vartheta, self.rho, self.bigtheta]
    }
}

/// Three consecutive, equally spaced flow states.
#[derive(Debug, Clone, Copy)]
pub struct LemmaWindow<'a> {
    pub prev: &'a GraphState,
    pub mid: &'a GraphState,
    pub next: &'a GraphState,
}

impl<'a> LemmaWindow<'a> {
    pub fn new(states: &[&'a GraphState]) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::WindowTooShort {
                needed: 3,
                got: states.len(),
            });
        }
        let w = Self {
            prev: states[0],
            mid: states[1],
            next: states[2],
        };
        let (d1, d2) = (w.mid.t - w.prev.t, w.next.t - w.mid.t);
        if !(d1 > 0.0) || (d1 - d2).abs() > 1e-9 * d1.max(d2) {
            return Err(Error::InvalidArgument(format!("window spacing {d1} and {d2} not uniform")));
        }
        Ok(w)
    }

    pub fn dt(&self) -> f64 {
        0.5 * (self.next.t - self.prev.t)
    }
}

/// `sup |∂_t θ − η^{ij} θ_ij|`.
pub fn residual_theta_evolution(window: &LemmaWindow<'_>, metric: &MetricField) -> Result<f64> {
    Context::new(window, metric)?.theta()
}

/// Residual of the identity for `τ = (u − u₀(p) − θ̂ t)²`.
pub fn residual_tau(window: &LemmaWindow<'_>, metric: &MetricField, theta_hat: f64) -> Result<f64> {
    Context::new(window, metric)?.tau(theta_hat)
}

/// Residual of the identity for `ϑ = g^{ij} u_i u_j`.
pub fn residual_vartheta(window: &LemmaWindow<'_>, metric: &MetricField) -> Result<f64> {
    Context::new(window, metric)?.vartheta()
}

/// Residual of the identity for `ρ = |D²u|²_g`; `with_xi1 = false` drops the
/// curvature commutator term.
pub fn residual_rho(window: &LemmaWindow<'_>, metric: &MetricField, with_xi1: bool) -> Result<f64> {
    Context::new(window, metric)?.rho(with_xi1)
}

/// Residual of the identity for `Θ = |D³u|²_g`.
pub fn residual_bigtheta(window: &LemmaWindow<'_>, metric: &MetricField) -> Result<f64> {
    Context::new(window, metric)?.bigtheta()
}

struct Context<'a> {
    w: LemmaWindow<'a>,
    m: &'a MetricField,
    n: usize,
    dt: f64,
    bundle: AngleBundle,
    theta_prev: ScalarField,
    theta_next: ScalarField,
    jet_prev: Jet,
    jet_mid: Jet,
    jet_next: Jet,
    /// `χ̂_{p,qi}`
    chi_hat2: TensorField,
    /// `X_{pqi} = (χ̂ + du)_{p,qi}`
    x: TensorField,
    /// `η_{ab,j}`
    deta: TensorField,
    /// `η^{ms}_{,j}`
    deta_inv: TensorField,
    /// `u_l R^l_{msi}`
    a: TensorField,
    /// `u_{lb} R^l_{acd} + u_{al} R^l_{bcd}`
    b: TensorField,
    /// `D_l a_{pqi}`
    da: TensorField,
}

fn sup(f: impl Iterator<Item = f64>) -> f64 {
    f.fold(0.0, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

impl<'a> Context<'a> {
    fn new(w: &LemmaWindow<'a>, m: &'a MetricField) -> Result<Self> {
        let n = m.dim();
        let bundle = AngleBundle::compute(w.mid, m)?;
        let theta_prev = AngleBundle::compute(w.prev, m)?.theta;
        let theta_next = AngleBundle::compute(w.next, m)?.theta;
        let jet_prev = Jet::compute(&w.prev.u, m, false)?;
        let jet_next = Jet::compute(&w.next.u, m, false)?;
        let jet_mid = Jet::compute(&w.mid.u, m, true)?;
        let chi_hat = crate::angle::chi_prime(&w.mid.reference(), m)?;
        let chi_hat2 = covariant_derivative(&chi_hat, m)?;
        let x = covariant_derivative(&bundle.chi_prime, m)?;
        let deta = covariant_derivative(&bundle.eta, m)?;
        let grid = *m.grid();
        let ei = &bundle.eta_inv;
        let deta_inv = TensorField::from_point_fn(grid, 3, |p, out| {
            let e = ei.at(p);
            let d = deta.at(p);
            for ms in 0..n {
                for s in 0..n {
                    for j in 0..n {
                        let mut v = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                v -= e[ms * n + a] * e[b * n + s] * d[offset(n, &[a, b, j])];
                            }
                        }
                        out[offset(n, &[ms, s, j])] = v;
                    }
                }
            }
        });
        let r = &m.riemann;
        let d1 = &jet_mid.d1;
        let a = TensorField::from_point_fn(grid, 3, |p, out| {
            let rp = r.at(p);
            let up = d1.at(p);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out[offset(n, &[i, j, k])] = (0..n).map(|l| up[l] * rp[offset(n, &[l, i, j, k])]).sum();
                    }
                }
            }
        });
        let d2 = &jet_mid.d2;
        let b = TensorField::from_point_fn(grid, 4, |p, out| {
            let rp = r.at(p);
            let u2 = d2.at(p);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let mut v = 0.0;
                            for q in 0..n {
                                v += u2[q * n + j] * rp[offset(n, &[q, i, k, l])]
                                    + u2[i * n + q] * rp[offset(n, &[q, j, k, l])];
                            }
                            out[offset(n, &[i, j, k, l])] = v;
                        }
                    }
                }
            }
        });
        let da = covariant_derivative(&a, m)?;
        Ok(Self {
            w: *w,
            m,
            n,
            dt: w.dt(),
            bundle,
            theta_prev,
            theta_next,
            jet_prev,
            jet_mid,
            jet_next,
            chi_hat2,
            x,
            deta,
            deta_inv,
            a,
            b,
            da,
        })
    }

    fn laplace_eta(&self, f: &ScalarField) -> Result<ScalarField> {
        Ok(contract(&covariant_hessian(f, self.m)?, &self.bundle.eta_inv))
    }

    /// `sup |(f_next − f_prev)/(2dt) − Δ_η f_mid − rhs|`.
    fn residual(&self, prev: &ScalarField, mid: &ScalarField, next: &ScalarField, rhs: &ScalarField) -> Result<f64> {
        let lap = self.laplace_eta(mid)?;
        let inv = 0.5 / self.dt;
        Ok(sup((0..prev.grid().len()).map(|p| {
            (next.value(p) - prev.value(p)) * inv - lap.value(p) - rhs.value(p)
        })))
    }

    fn theta(&self) -> Result<f64> {
        let zero = ScalarField::zeros(*self.m.grid(), 0);
        self.residual(&self.theta_prev, &self.bundle.theta, &self.theta_next, &zero)
    }

    fn tau(&self, theta_hat: f64) -> Result<f64> {
        let mid = self.w.mid;
        let tau_mid = tau_field(mid, theta_hat);
        let lap_u = self.laplace_eta(&mid.u)?;
        let grad2 = contract(&self.jet_mid.d1, &raise_slot(&self.jet_mid.d1, 0, &self.bundle.eta_inv));
        let shift = mid.anchor + theta_hat * mid.t;
        let rhs = TensorField::from_point_fn(*self.m.grid(), 0, |p, out| {
            let v = mid.u.value(p) - shift;
            out[0] = 2.0 * v * (self.bundle.theta.value(p) - theta_hat - lap_u.value(p)) - 2.0 * grad2.value(p);
        });
        self.residual(
            &tau_field(self.w.prev, theta_hat),
            &tau_mid,
            &tau_field(self.w.next, theta_hat),
            &rhs,
        )
    }

    fn vartheta(&self) -> Result<f64> {
        let n = self.n;
        let m = self.m;
        let f = |j: &Jet| norm_squared(&j.d1, m);
        let d1 = &self.jet_mid.d1;
        let d2 = &self.jet_mid.d2;
        let rhs = TensorField::from_point_fn(*m.grid(), 0, |p, out| {
            let gi = m.g_inv.at(p);
            let ei = self.bundle.eta_inv.at(p);
            let u1 = d1.at(p);
            let u2 = d2.at(p);
            let a = self.a.at(p);
            let ch = self.chi_hat2.at(p);
            let mut v = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for pp in 0..n {
                        for q in 0..n {
                            let w = gi[i * n + j] * ei[pp * n + q];
                            v += w
                                * (-2.0 * u2[i * n + pp] * u2[j * n + q]
                                    + 2.0 * a[offset(n, &[pp, q, i])] * u1[j]
                                    + 2.0 * ch[offset(n, &[pp, q, i])] * u1[j]);
                        }
                    }
                }
            }
            out[0] = v;
        });
        self.residual(&f(&self.jet_prev), &f(&self.jet_mid), &f(&self.jet_next), &rhs)
    }

    fn xi1(&self) -> TensorField {
        let n = self.n;
        TensorField::from_point_fn(*self.m.grid(), 4, |p, out| {
            let da = self.da.at(p);
            let b = self.b.at(p);
            for pp in 0..n {
                for q in 0..n {
                    for i in 0..n {
                        for l in 0..n {
                            out[offset(n, &[pp, q, i, l])] = da[offset(n, &[pp, q, i, l])]
                                + b[offset(n, &[i, pp, q, l])]
                                + da[offset(n, &[i, pp, l, q])];
                        }
                    }
                }
            }
        })
    }

    fn rho(&self, with_xi1: bool) -> Result<f64> {
        let n = self.n;
        let m = self.m;
        let f = |j: &Jet| norm_squared(&j.d2, m);
        let ubar = raise_all(&self.jet_mid.d2, m);
        let chi_hat3 = covariant_derivative(&self.chi_hat2, m)?;
        let xi1 = if with_xi1 { Some(self.xi1()) } else { None };
        let u3 = &self.jet_mid.d3;
        let u3_up = raise_slot(&raise_slot(&raise_slot(u3, 0, &m.g_inv), 1, &m.g_inv), 2, &self.bundle.eta_inv);
        let dissipation = contract(u3, &u3_up);
        let rhs = TensorField::from_point_fn(*m.grid(), 0, |p, out| {
            let ub = ubar.at(p);
            let ei = self.bundle.eta_inv.at(p);
            let dei = self.deta_inv.at(p);
            let x = self.x.at(p);
            let c3 = chi_hat3.at(p);
            let xi = xi1.as_ref().map(|t| t.at(p));
            let mut v = 0.0;
            for i in 0..n {
                for k in 0..n {
                    let mut bracket = 0.0;
                    for pp in 0..n {
                        for q in 0..n {
                            let mut inner = c3[offset(n, &[pp, q, i, k])];
                            if let Some(xi) = xi {
                                inner += xi[offset(n, &[pp, q, i, k])];
                            }
                            bracket += dei[offset(n, &[pp, q, k])] * x[offset(n, &[pp, q, i])] + ei[pp * n + q] * inner;
                        }
                    }
                    v += 2.0 * ub[i * n + k] * bracket;
                }
            }
            out[0] = v - 2.0 * dissipation.value(p);
        });
        self.residual(&f(&self.jet_prev), &f(&self.jet_mid), &f(&self.jet_next), &rhs)
    }

    fn bigtheta(&self) -> Result<f64> {
        let n = self.n;
        let m = self.m;
        let grid = *m.grid();
        let f = |j: &Jet| norm_squared(&j.d3, m);
        let u3 = &self.jet_mid.d3;
        let u3_up = raise_all(u3, m);
        let d4 = self.jet_mid.d4.as_ref().expect("fourth derivative computed for the middle state");
        let upsilon = upsilon_field(d4, &self.bundle.eta_inv, m);

        let dx = covariant_derivative(&self.x, m)?;
        let chi_hat4 = covariant_derivative(&covariant_derivative(&self.chi_hat2, m)?, m)?;
        let d2a = covariant_derivative(&self.da, m)?;
        let db = covariant_derivative(&self.b, m)?;
        let d2eta = covariant_derivative(&self.deta, m)?;

        let rhs = TensorField::from_point_fn(grid, 0, |p, out| {
            let ei = self.bundle.eta_inv.at(p);
            let dei = self.deta_inv.at(p);
            let de = self.deta.at(p);
            let dde = d2eta.at(p);
            let x = self.x.at(p);
            let dxp = dx.at(p);
            let c4 = chi_hat4.at(p);
            let d2ap = d2a.at(p);
            let dbp = db.at(p);
            let u3p = u3.at(p);
            let up = u3_up.at(p);
            let rp = m.riemann.at(p);
            let o = |idx: &[usize]| offset(n, idx);
            let riem = |l: usize, i: usize, j: usize, k: usize| rp[o(&[l, i, j, k])];

            // η^{ms}_{,jk}
            let mut dd_inv = [0.0; 81];
            for ms in 0..n {
                for s in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let mut v = 0.0;
                            for a in 0..n {
                                for b in 0..n {
                                    let eab_j = de[o(&[a, b, j])];
                                    v -= dei[o(&[ms, a, k])] * ei[b * n + s] * eab_j
                                        + ei[ms * n + a] * dei[o(&[b, s, k])] * eab_j
                                        + ei[ms * n + a] * ei[b * n + s] * dde[o(&[a, b, j, k])];
                                }
                            }
                            dd_inv[o(&[ms, s, j, k])] = v;
                        }
                    }
                }
            }

            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut w = 0.0;
                        for mm in 0..n {
                            for s in 0..n {
                                let xi2 = d2ap[o(&[mm, s, i, j, k])]
                                    + dbp[o(&[i, mm, s, j, k])]
                                    + d2ap[o(&[i, mm, j, s, k])]
                                    + (0..n)
                                        .map(|l| {
                                            u3p[o(&[l, j, mm])] * riem(l, i, s, k)
                                                + u3p[o(&[i, l, mm])] * riem(l, j, s, k)
                                                + u3p[o(&[i, j, l])] * riem(l, mm, s, k)
                                        })
                                        .sum::<f64>()
                                    + dbp[o(&[i, j, mm, k, s])];
                                w += dd_inv[o(&[mm, s, j, k])] * x[o(&[mm, s, i])]
                                    + dei[o(&[mm, s, j])] * dxp[o(&[mm, s, i, k])]
                                    + dei[o(&[mm, s, k])] * dxp[o(&[mm, s, i, j])]
                                    + ei[mm * n + s] * (c4[o(&[mm, s, i, j, k])] + xi2);
                            }
                        }
                        total += up[o(&[i, j, k])] * w;
                    }
                }
            }
            out[0] = 2.0 * total - 2.0 * upsilon.value(p);
        });
        self.residual(&f(&self.jet_prev), &f(&self.jet_mid), &f(&self.jet_next), &rhs)
    }
}
