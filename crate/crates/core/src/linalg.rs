//! Dense linear algebra for the `n ≤ 3` matrices that live at each grid point.

use num_complex::Complex64;

pub type Mat3 = [[f64; 3]; 3];

pub const JACOBI_TOL: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 50;

pub fn identity() -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Reads an `n×n` matrix stored row-major in `s`.
#[inline]
pub fn from_slice(s: &[f64], n: usize) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = s[i * n + j];
        }
    }
    m
}

#[inline]
pub fn write_slice(m: &Mat3, n: usize, s: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = m[i][j];
        }
    }
}

pub fn mul(a: &Mat3, b: &Mat3, n: usize) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn det(a: &Mat3, n: usize) -> f64 {
    match n {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => unreachable!("dimension {n} not supported"),
    }
}

/// Inverse by the adjugate; `None` when the determinant vanishes.
pub fn inverse(a: &Mat3, n: usize) -> Option<Mat3> {
    let d = det(a, n);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    match n {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = a[1][1] / d;
            inv[0][1] = -a[0][1] / d;
            inv[1][0] = -a[1][0] / d;
            inv[1][1] = a[0][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
                }
            }
        }
        _ => unreachable!(),
    }
    Some(inv)
}

pub fn complex_det(a: &[[Complex64; 3]; 3], n: usize) -> Complex64 {
    match n {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        _ => unreachable!(),
    }
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the orthogonal matrix whose columns are the
/// eigenvectors, or `None` if the off-diagonal mass is still above
/// `JACOBI_TOL · ‖A‖_F` after `JACOBI_MAX_SWEEPS` sweeps.
pub fn sym_eigen(a: &Mat3, n: usize) -> Option<([f64; 3], Mat3)> {
    let mut m = *a;
    let mut v = identity();
    let norm: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a[i][j] * a[i][j])
        .sum::<f64>()
        .sqrt();
    let off = |m: &Mat3| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i][j] * m[i][j];
            }
        }
        s.sqrt()
    };
    let mut converged = off(&m) <= JACOBI_TOL * norm;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let app = m[p][p];
                let aqq = m[q][q];
                let apq = m[p][q];
                m[p][p] = app - t * apq;
                m[q][q] = aqq + t * apq;
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = m[r][p];
                        let arq = m[r][q];
                        m[r][p] = c * arp - s * arq;
                        m[p][r] = m[r][p];
                        m[r][q] = s * arp + c * arq;
                        m[q][r] = m[r][q];
                    }
                    let vrp = v[r][p];
                    let vrq = v[r][q];
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
        }
        sweeps += 1;
        converged = off(&m) <= JACOBI_TOL * norm;
    }
    if !converged {
        return None;
    }
    let mut eig = [0.0; 3];
    for i in 0..n {
        eig[i] = m[i][i];
    }
    Some((eig, v))
}

/// `A^{-1/2}` for a symmetric positive definite matrix, with its smallest
/// eigenvalue. `None` if Jacobi fails or `A` is not positive definite.
pub fn inv_sqrt_spd(a: &Mat3, n: usize) -> Option<(Mat3, f64)> {
    let (eig, v) = sym_eigen(a, n)?;
    let min = eig[..n].iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return None;
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v[i][k] * v[j][k] / eig[k].sqrt();
            }
            out[i][j] = s;
        }
    }
    Some((out, min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(n: usize, e: &[f64]) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[i][j] = e[k];
                m[j][i] = e[k];
                k += 1;
            }
        }
        m
    }

    proptest! {
        #[test]
        fn jacobi_reconstructs_matrix(e in prop::collection::vec(-5.0f64..5.0, 6), n in 1usize..=3) {
            let a = sym(n, &e);
            let (eig, v) = sym_eigen(&a, n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let r: f64 = (0..n).map(|k| v[i][k] * eig[k] * v[j][k]).sum();
                    prop_assert!((r - a[i][j]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn inverse_is_inverse(e in prop::collection::vec(-1.0f64..1.0, 6), n in 1usize..=3) {
            let mut a = sym(n, &e);
            for i in 0..n { a[i][i] += 3.0; }
            let inv = inverse(&a, n).unwrap();
            let p = mul(&a, &inv, n);
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((p[i][j] - id).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn inv_sqrt_of_diagonal() {
        let mut a = [[0.0; 3]; 3];
        a[0][0] = 4.0;
        a[1][1] = 0.25;
        let (s, min) = inv_sqrt_spd(&a, 2).unwrap();
        assert!((s[0][0] - 0.5).abs() < 1e-15);
        assert!((s[1][1] - 2.0).abs() < 1e-15);
        assert_eq!(min, 0.25);
    }

    #[test]
    fn indefinite_matrix_has_no_inverse_sqrt() {
        let mut a = [[0.0; 3]; 3];
        a[0][0] = 1.0;
        a[1][1] = -0.1;
        assert!(inv_sqrt_spd(&a, 2).is_none());
    }
}
