//! Dense symmetric eigenvalues: Householder reduction to tridiagonal form
//! followed by implicit-shift QL iterations. Eigenvectors are not formed.

use thiserror::Error;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("matrix is not square: {len} entries for dimension {n}")]
    Shape { n: usize, len: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("QL iteration did not converge for eigenvalue {index} (residual off-diagonal {residual:e})")]
    NoConvergence { index: usize, residual: f64 },
}

/// Eigenvalues of a symmetric matrix stored row-major, sorted in
/// non-increasing order.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>, EigenError> {
    if a.len() != n * n {
        return Err(EigenError::Shape { n, len: a.len() });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            let gap = (a[i * n + j] - a[j * n + i]).abs();
            if gap > 1e-12 * scale {
                return Err(EigenError::NotSymmetric { i, j, gap });
            }
        }
    }
    let mut rows: Vec<Vec<f64>> = a.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
    let (mut diag, mut off) = tridiagonalize(&mut rows);
    ql_implicit(&mut diag, &mut off)?;
    diag.sort_by(|x, y| y.total_cmp(x));
    Ok(diag)
}

/// Householder reduction. Returns the diagonal and the sub-diagonal, where
/// `off[i]` couples entries `i - 1` and `i` (`off[0] = 0`).
fn tridiagonalize(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = a[i][..=l].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = a[i][l];
            } else {
                for k in 0..=l {
                    a[i][k] /= scale;
                    h += a[i][k] * a[i][k];
                }
                let f = a[i][l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i][l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j][k] * a[i][k];
                    }
                    for k in j + 1..=l {
                        g += a[k][j] * a[i][k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i][j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i][j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j][k] -= f * e[k] + g * a[i][k];
                    }
                }
            }
        } else {
            e[i] = a[i][l];
        }
        d[i] = h;
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[i][i];
    }
    if n > 0 {
        e[0] = 0.0;
    }
    (d, e)
}

/// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.
/// On success `d` holds the eigenvalues (unsorted).
fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<(), EigenError> {
    let n = d.len();
    if n < 2 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if sweeps == MAX_SWEEPS_PER_EIGENVALUE {
                return Err(EigenError::NoConvergence {
                    index: l,
                    residual: e[l].abs(),
                });
            }
            sweeps += 1;
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn diagonal_and_tiny_matrices() {
        assert_eq!(symmetric_eigenvalues(&[], 0).unwrap(), Vec::<f64>::new());
        assert_eq!(symmetric_eigenvalues(&[3.5], 1).unwrap(), vec![3.5]);
        let ev = symmetric_eigenvalues(&[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0], 3).unwrap();
        assert_eq!(ev, vec![5.0, 2.0, -1.0]);
        let ev = symmetric_eigenvalues(&[0.5, 0.5, 0.5, 0.5], 2).unwrap();
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn path_laplacian_closed_form() {
        // eigenvalues of the path Laplacian: 2 - 2 cos(pi k / n)
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let deg = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            a[i * n + i] = deg;
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[(i + 1) * n + i] = -1.0;
            }
        }
        let ev = symmetric_eigenvalues(&a, n).unwrap();
        let expected = sorted_desc(
            (0..n)
                .map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        );
        for (x, y) in ev.iter().zip(&expected) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn agrees_with_nalgebra_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 5, 17, 40] {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
            let ours = symmetric_eigenvalues(&a, n).unwrap();
            let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
            let theirs = sorted_desc(m.symmetric_eigenvalues().iter().copied().collect());
            for (x, y) in ours.iter().zip(&theirs) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(symmetric_eigenvalues(&[1.0, 2.0, 3.0], 2), Err(EigenError::Shape { .. })));
        assert!(matches!(
            symmetric_eigenvalues(&[1.0, 2.0, 3.0, 1.0], 2),
            Err(EigenError::NotSymmetric { i: 0, j: 1, .. })
        ));
    }
}
