//! Dense and matrix-free linear-algebra utilities shared by the solvers:
//! a right-preconditioned GMRES, a scaling-and-squaring matrix exponential,
//! singular-value extremes via power/inverse iteration, and least-squares
//! line fitting for decay-rate estimation.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Right-preconditioned GMRES with modified Gram-Schmidt, starting from
/// zero. Returns the solution, the iteration count, and the final relative
/// residual estimate.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &DVector<f64>,
    tol_rel: f64,
    max_basis: usize,
) -> Result<(DVector<f64>, usize, f64)>
where
    A: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let beta = b.norm();
    if beta == 0.0 {
        return Ok((DVector::zeros(n), 0, 0.0));
    }
    let m = max_basis.min(n).max(1);
    let mut basis: Vec<DVector<f64>> = vec![b / beta];
    let mut h: Vec<Vec<f64>> = Vec::new(); // h[j] has j + 2 entries
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];

    for j in 0..m {
        let mut w = apply(&precond(&basis[j]));
        let mut col = Vec::with_capacity(j + 2);
        for vi in basis.iter().take(j + 1) {
            let hij = w.dot(vi);
            w.axpy(-hij, vi, 1.0);
            col.push(hij);
        }
        let hlast = w.norm();
        col.push(hlast);
        // Apply the accumulated rotations to the new column.
        for i in 0..j {
            let (c, s) = (cs[i], sn[i]);
            let t = c * col[i] + s * col[i + 1];
            col[i + 1] = -s * col[i] + c * col[i + 1];
            col[i] = t;
        }
        // New rotation eliminating the subdiagonal entry.
        let (c, s) = {
            let r = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
            if r == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / r, col[j + 1] / r)
            }
        };
        let t = c * col[j] + s * col[j + 1];
        col[j] = t;
        col[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        let res = g[j + 1].abs();
        // Exit on convergence, a full basis, or a lucky breakdown (the
        // Krylov space became invariant and cannot grow further).
        if res <= tol_rel * beta || j + 1 == m || hlast <= 1e-300 {
            // Back substitution on the triangular system.
            let k = j + 1;
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let mut acc = g[i];
                for l in i + 1..k {
                    acc -= h[l][i] * y[l];
                }
                y[i] = acc / h[i][i];
            }
            let mut z = DVector::zeros(n);
            for (l, yi) in y.iter().enumerate() {
                z.axpy(*yi, &basis[l], 1.0);
            }
            let x = precond(&z);
            if res <= tol_rel * beta {
                return Ok((x, k, res / beta));
            }
            return Err(Error::NonConvergence {
                what: "gmres".to_string(),
                iterations: k,
                last_change: res / beta,
            });
        }
        basis.push(w / hlast);
    }
    unreachable!("gmres loop always exits via the basis cap");
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let eye = DMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &eye;
    let u = &scaled * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &eye;
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled inputs");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Largest singular value by power iteration on M^T M.
pub fn spectral_norm(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0) * 1e-3);
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let mut z = m.transpose() * w;
        let zn = z.norm();
        if zn == 0.0 {
            return 0.0;
        }
        z /= zn;
        let new_sigma = (m * &z).norm();
        let done = (new_sigma - sigma).abs() <= tol * new_sigma.max(1e-300);
        sigma = new_sigma;
        v = z;
        if done {
            break;
        }
    }
    sigma
}

/// Smallest singular value via LU-based inverse iteration on (M^T M)^{-1}.
/// Returns None when the factorization detects singularity.
pub fn smallest_singular_value(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Option<f64> {
    let n = m.ncols();
    let lu = m.clone().lu();
    let lut = m.transpose().lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0) * 1e-3);
    v /= v.norm();
    let mut rho = 0.0f64;
    for _ in 0..max_iter {
        let y = lut.solve(&v)?;
        let z = lu.solve(&y)?;
        let zn = z.norm();
        if !zn.is_finite() {
            return None;
        }
        if zn == 0.0 {
            return Some(f64::INFINITY);
        }
        let new_rho = zn;
        let w = z / zn;
        let done = (new_rho - rho).abs() <= tol * new_rho.max(1e-300);
        rho = new_rho;
        v = w;
        if done {
            break;
        }
    }
    Some(1.0 / rho.sqrt())
}

/// Least-squares straight line through (x, y) samples: returns (slope,
/// intercept).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::domain("line fit needs at least two matched samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::domain("line fit with degenerate abscissae"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gmres_solves_small_spd_system() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 5.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, _, _) = gmres(|v| &m * v, |v| v.clone(), &b, 1e-13, 10).unwrap();
        let r = &b - &m * &x;
        assert!(r.norm() < 1e-11);
    }

    #[test]
    fn gmres_with_diagonal_preconditioner() {
        let n = 40;
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (i + 1) as f64
            } else if i.abs_diff(j) == 1 {
                0.3
            } else {
                0.0
            }
        });
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let diag: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let (x, iters, _) = gmres(
            |v| &m * v,
            |v| DVector::from_fn(n, |i, _| v[i] / diag[i]),
            &b,
            1e-13,
            60,
        )
        .unwrap();
        assert!((&b - &m * &x).norm() < 1e-10);
        assert!(iters <= 40);
    }

    #[test]
    fn expm_matches_diagonal_exponential() {
        let m = DMatrix::from_partial_diagonal(3, 3, &[-1.0, 0.5, -2.0]);
        let e = expm(&m);
        for (i, lam) in [-1.0f64, 0.5, -2.0].iter().enumerate() {
            assert_abs_diff_eq!(e[(i, i)], lam.exp(), epsilon = 1e-12);
        }
        assert!(e[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn expm_matches_rotation_block() {
        // exp of [[0, -t], [t, 0]] is a rotation by t.
        let t = 1.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&m);
        assert_abs_diff_eq!(e[(0, 0)], t.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(e[(1, 0)], t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let m = DMatrix::from_partial_diagonal(2, 2, &[-30.0, -40.0]);
        let e = expm(&m);
        assert_abs_diff_eq!(e[(0, 0)], (-30.0f64).exp(), epsilon = 1e-18);
    }

    #[test]
    fn singular_value_extremes() {
        let m = DMatrix::from_partial_diagonal(3, 3, &[3.0, -0.5, 1.0]);
        assert_abs_diff_eq!(spectral_norm(&m, 1e-14, 500), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            smallest_singular_value(&m, 1e-14, 500).unwrap(),
            0.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn singular_matrix_detected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(smallest_singular_value(&m, 1e-14, 100).is_none());
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.5 * x + 0.7).collect();
        let (slope, intercept) = fit_line(&xs, &ys).unwrap();
        assert_abs_diff_eq!(slope, -2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 0.7, epsilon = 1e-12);
    }
}
