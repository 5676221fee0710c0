//! Covariant Hessian against a point-by-point evaluation with explicit
//! stencil weights and closed-form Christoffel symbols.

use glmcf::covariant::covariant_hessian;
use glmcf::grid::PeriodicGrid;
use glmcf::metric::{build_metric, MetricSpec};
use glmcf::ScalarField;

const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

fn at(grid: &PeriodicGrid, u: &ScalarField, p: usize, shifts: &[(usize, isize)]) -> f64 {
    let mut q = p;
    for &(axis, s) in shifts {
        q = grid.shifted(q, axis, s);
    }
    u.value(q)
}

fn slow_hessian(u: &ScalarField, grid: &PeriodicGrid, fprime: impl Fn([f64; 3]) -> [f64; 2], p: usize) -> [[f64; 2]; 2] {
    let h = grid.spacing();
    let mut d1 = [0.0; 2];
    let mut d2 = [[0.0; 2]; 2];
    for a in 0..2 {
        for (k, w) in D1.iter().enumerate() {
            d1[a] += w * at(grid, u, p, &[(a, k as isize - 2)]) / (12.0 * h);
        }
        for (k, w) in D2.iter().enumerate() {
            d2[a][a] += w * at(grid, u, p, &[(a, k as isize - 2)]) / (12.0 * h * h);
        }
    }
    let mut mixed = 0.0;
    for (k, wk) in D1.iter().enumerate() {
        for (l, wl) in D1.iter().enumerate() {
            mixed += wk * wl * at(grid, u, p, &[(0, k as isize - 2), (1, l as isize - 2)]);
        }
    }
    d2[0][1] = mixed / (144.0 * h * h);
    d2[1][0] = d2[0][1];
    // g = e^{2f} δ: Γ^k_ij = δ^k_i f_j + δ^k_j f_i − δ_ij f_k
    let f = fprime(grid.coords(p));
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = d2[i][j];
            for k in 0..2 {
                let mut gamma = 0.0;
                if k == i {
                    gamma += f[j];
                }
                if k == j {
                    gamma += f[i];
                }
                if i == j {
                    gamma -= f[k];
                }
                v -= gamma * d1[k];
            }
            out[i][j] = v;
        }
    }
    out
}

#[test]
fn hessian_matches_slow_path() {
    let grid = PeriodicGrid::new(2, 32).unwrap();
    let m = build_metric(&MetricSpec::conformal("0.1*sin(q1) + 0.05*cos(q2)".parse().unwrap()), grid).unwrap();
    let u = ScalarField::from_fn(grid, |q| 0.3 * (q[0] + 2.0 * q[1]).sin() + 0.1 * (2.0 * q[0]).cos() * q[1].sin());
    let fast = covariant_hessian(&u, &m).unwrap();
    let mut worst = 0.0f64;
    for p in 0..grid.len() {
        let slow = slow_hessian(&u, &grid, |q| [0.1 * q[0].cos(), -0.05 * q[1].sin()], p);
        for (i, row) in slow.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                worst = worst.max((fast.get(p, &[i, j]) - v).abs());
            }
        }
    }
    assert!(worst <= 1e-13, "max deviation {worst:e}");
}
