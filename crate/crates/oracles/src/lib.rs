//! Slow, independent reference computations for tests.
//!
//! Nothing here calls into `rootopt`'s arithmetic: products, decompositions
//! and derivatives are recomputed with plain loops so a test comparing the
//! two routes can actually catch a bug in either.

use rootopt::DenseMatrix;

pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn from_rows(rows: &Mat) -> DenseMatrix {
    let cols = rows[0].len();
    DenseMatrix::new(rows.len(), cols, rows.iter().flatten().copied().collect()).unwrap()
}

pub fn naive_matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[i][t] * b[t][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn naive_transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn naive_frobenius(a: &Mat) -> f64 {
    let mut acc = 0.0;
    for row in a {
        for x in row {
            acc += x * x;
        }
    }
    acc.sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues and eigenvectors stored as columns.
pub fn symmetric_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Applies `f` to the spectrum of a symmetric positive semi-definite matrix.
pub fn spd_function(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = symmetric_eigen(a);
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| vecs[i][k] * f(vals[k]) * vecs[j][k]).sum();
        }
    }
    out
}

/// Orthogonal polar factor `M (M^T M)^{-1/2}` of a tall full-rank matrix.
pub fn polar_via_gram(m: &DenseMatrix) -> DenseMatrix {
    assert!(m.rows() >= m.cols(), "oracle expects a tall matrix");
    let a = to_rows(m);
    let gram = naive_matmul(&naive_transpose(&a), &a);
    let inv_sqrt = spd_function(&gram, |x| 1.0 / x.sqrt());
    from_rows(&naive_matmul(&a, &inv_sqrt))
}

/// Singular values of a matrix from the eigenvalues of its small Gram matrix, descending.
pub fn singular_values_via_gram(m: &DenseMatrix) -> Vec<f64> {
    let a = to_rows(m);
    let at = naive_transpose(&a);
    let gram = if m.rows() >= m.cols() { naive_matmul(&at, &a) } else { naive_matmul(&a, &at) };
    let (vals, _) = symmetric_eigen(&gram);
    let mut s: Vec<f64> = vals.into_iter().map(|x| x.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `g(x) = a x + b x^3 + c x^5` composed `t` times, written out longhand.
pub fn scalar_compose(a: f64, b: f64, c: f64, t: usize, mut x: f64) -> f64 {
    for _ in 0..t {
        x = a * x + b * x.powi(3) + c * x.powi(5);
    }
    x
}

/// `U diag(h(sigma)) V^T` from a given decomposition.
pub fn apply_to_spectrum(u: &DenseMatrix, sigma: &[f64], vt: &DenseMatrix, h: impl Fn(f64) -> f64) -> DenseMatrix {
    let (rows, k) = u.shape();
    let cols = vt.cols();
    DenseMatrix::from_fn(rows, cols, |i, j| (0..k).map(|t| u.get(i, t) * h(sigma[t]) * vt.get(t, j)).sum())
}

/// Central finite-difference gradient.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Minimizer of `0.5 (o - x)^2 + eps |o|` over a uniform grid on `[lo, hi]`.
pub fn grid_prox_minimizer(x: f64, eps: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=n {
        let o = lo + i as f64 * step;
        let val = 0.5 * (o - x) * (o - x) + eps * o.abs();
        if val < best.0 {
            best = (val, o);
        }
    }
    best.1
}

/// Linear-interpolation quantile of `|values|` by explicit sorting.
pub fn sorted_quantile_abs(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
