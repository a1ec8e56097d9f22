//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of the tall orientation are rotated pairwise until mutually
//! orthogonal; their norms are then the singular values. The sweep order is
//! fixed, so results are bit-reproducible for a given input.

use super::{DenseMatrix, MatrixError};

/// `sigma_min / sigma_max` at or below which a matrix is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct Svd {
    /// rows x k, orthonormal columns
    pub u: DenseMatrix,
    /// non-increasing, length k = min(rows, cols)
    pub singular_values: Vec<f64>,
    /// k x cols, orthonormal rows
    pub vt: DenseMatrix,
}

impl Svd {
    /// `u * diag(singular_values) * vt`
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        let k = self.singular_values.len();
        for r in 0..us.rows() {
            for (c, &s) in self.singular_values.iter().enumerate() {
                let idx = r * k + c;
                us.as_mut_slice()[idx] *= s;
            }
        }
        us.matmul(&self.vt)
    }
}

/// Thin SVD with singular values sorted descending and each left singular
/// vector's largest-magnitude entry made positive.
pub fn svd(m: &DenseMatrix) -> Result<Svd, MatrixError> {
    if m.rows() >= m.cols() {
        let (u_cols, sigma, v_cols) = jacobi_tall(m)?;
        Ok(canonicalize(u_cols, sigma, v_cols, m.rows(), m.cols()))
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let (u_cols, sigma, v_cols) = jacobi_tall(&m.transpose())?;
        Ok(canonicalize(v_cols, sigma, u_cols, m.rows(), m.cols()))
    }
}

/// Orthogonal polar factor `U V^T`.
///
/// Fails with [`MatrixError::RankDeficient`] when the factor is not unique.
pub fn polar_factor(m: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    let dec = svd(m)?;
    let s_max = dec.singular_values[0];
    let s_min = *dec.singular_values.last().unwrap();
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if ratio <= RANK_TOLERANCE {
        return Err(MatrixError::RankDeficient { ratio });
    }
    Ok(dec.u.matmul(&dec.vt))
}

type Columns = Vec<Vec<f64>>;

/// Returns left vectors (k columns of length rows), singular values and right
/// vectors (k columns of length k), unsorted.
fn jacobi_tall(a: &DenseMatrix) -> Result<(Columns, Vec<f64>, Columns), MatrixError> {
    let (rows, n) = a.shape();
    let mut work: Columns = (0..n)
        .map(|c| (0..rows).map(|r| a.get(r, c)).collect())
        .collect();
    let mut v: Columns = (0..n)
        .map(|c| {
            let mut col = vec![0.0; n];
            col[c] = 1.0;
            col
        })
        .collect();

    let tol = f64::EPSILON * rows.max(8) as f64;
    let mut norms: Vec<f64> = work.iter().map(|c| dot(c, c)).collect();
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(MatrixError::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (left, right) = work.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                let gamma = dot(cp, cq);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cp, cq, c, s);
                // refresh norms from the rotated data to stop drift accumulating
                norms[p] = dot(cp, cp);
                norms[q] = dot(cq, cq);
                let (vl, vr) = v.split_at_mut(q);
                rotate(&mut vl[p], &mut vr[0], c, s);
            }
        }
        if !norms.iter().all(|x| x.is_finite()) {
            return Err(MatrixError::ConvergenceFailure { sweeps });
        }
    }

    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    let s_max = sigma.iter().cloned().fold(0.0, f64::max);
    let null_cut = s_max * f64::EPSILON * rows as f64;
    let mut live = vec![false; n];
    for (j, col) in work.iter_mut().enumerate() {
        if sigma[j] > null_cut && sigma[j] > 0.0 {
            let inv = 1.0 / sigma[j];
            col.iter_mut().for_each(|x| *x *= inv);
            live[j] = true;
        }
    }
    complete_basis(&mut work, &live);
    Ok((work, sigma, v))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn rotate(p: &mut [f64], q: &mut [f64], c: f64, s: f64) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Replaces null columns with unit vectors orthogonal to every other column,
/// drawn deterministically from the standard basis.
fn complete_basis(cols: &mut Columns, live: &[bool]) {
    let dim = cols.first().map_or(0, |c| c.len());
    let mut candidate = 0;
    for j in 0..cols.len() {
        if live[j] {
            continue;
        }
        loop {
            assert!(candidate < dim, "ran out of basis candidates");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for (i, other) in cols.iter().enumerate() {
                    if i == j || (!live[i] && i > j) {
                        continue;
                    }
                    let proj = dot(&e, other);
                    e.iter_mut().zip(other).for_each(|(x, o)| *x -= proj * o);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= norm);
                cols[j] = e;
                break;
            }
        }
    }
}

fn canonicalize(
    mut u_cols: Columns,
    sigma: Vec<f64>,
    mut v_cols: Columns,
    rows: usize,
    cols: usize,
) -> Svd {
    let k = sigma.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    for j in 0..k {
        let col = &u_cols[j];
        let mut arg = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[arg].abs() {
                arg = i;
            }
        }
        if col[arg] < 0.0 {
            u_cols[j].iter_mut().for_each(|x| *x = -*x);
            v_cols[j].iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = DenseMatrix::from_fn(rows, k, |r, c| u_cols[order[c]][r]);
    let vt = DenseMatrix::from_fn(k, cols, |r, c| v_cols[order[r]][c]);
    let singular_values = order.iter().map(|&j| sigma[j]).collect();
    Svd {
        u,
        singular_values,
        vt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm()
    }

    fn orthonormal_cols(m: &DenseMatrix) -> f64 {
        m.gram().sub(&DenseMatrix::identity(m.cols())).frobenius_norm()
    }

    #[test]
    fn diagonal_input() {
        let dec = svd(&DenseMatrix::from_diag(&[3.0, 2.0])).unwrap();
        assert_eq!(dec.singular_values, vec![3.0, 2.0]);
        assert_eq!(dec.u, DenseMatrix::identity(2));
        assert_eq!(dec.vt, DenseMatrix::identity(2));
    }

    #[test]
    fn unsorted_diagonal_is_sorted() {
        let dec = svd(&DenseMatrix::from_diag(&[1.0, 4.0, 2.0])).unwrap();
        assert_eq!(dec.singular_values, vec![4.0, 2.0, 1.0]);
        assert!(rel_err(&dec.reconstruct(), &DenseMatrix::from_diag(&[1.0, 4.0, 2.0])) < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let dec = svd(&DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(dec.singular_values, vec![0.0, 0.0]);
        assert!(orthonormal_cols(&dec.u) < 1e-12);
        assert!(orthonormal_cols(&dec.vt.transpose()) < 1e-12);
    }

    #[test]
    fn random_tall_and_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(r, c) in &[(5, 3), (3, 5), (1, 4), (4, 1), (16, 16)] {
            let m = DenseMatrix::random_gaussian(r, c, &mut rng);
            let dec = svd(&m).unwrap();
            assert_eq!(dec.u.shape(), (r, r.min(c)));
            assert_eq!(dec.vt.shape(), (r.min(c), c));
            assert!(rel_err(&dec.reconstruct(), &m) < 1e-8);
            assert!(orthonormal_cols(&dec.u) < 1e-8);
            assert!(orthonormal_cols(&dec.vt.transpose()) < 1e-8);
            assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_basis_is_completed() {
        // rank one 4x3
        let m = DenseMatrix::from_fn(4, 3, |i, j| (i + 1) as f64 * (j as f64 - 1.5));
        let dec = svd(&m).unwrap();
        assert!(orthonormal_cols(&dec.u) < 1e-10);
        assert!(rel_err(&dec.reconstruct(), &m) < 1e-12);
        assert!(dec.singular_values[1] < 1e-12);
    }

    #[test]
    fn signs_are_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DenseMatrix::random_gaussian(6, 4, &mut rng);
        let a = svd(&m).unwrap();
        let b = svd(&m.scale(-1.0)).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..6).map(|i| a.u.get(i, j)).collect();
            let big = col.iter().cloned().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
        }
        // negating the input flips V only
        assert!(a.u.approx_eq(&b.u, 1e-10));
        assert!(a.vt.approx_eq(&b.vt.scale(-1.0), 1e-10));
    }

    #[test]
    fn polar_examples() {
        assert!(polar_factor(&DenseMatrix::from_diag(&[2.0, 5.0]))
            .unwrap()
            .approx_eq(&DenseMatrix::identity(2), 1e-14));
        let p = DenseMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert!(polar_factor(&p).unwrap().approx_eq(&p, 1e-14));
        assert!(matches!(
            polar_factor(&DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]])),
            Err(MatrixError::RankDeficient { .. })
        ));
        assert!(matches!(
            polar_factor(&DenseMatrix::zeros(3, 2)),
            Err(MatrixError::RankDeficient { .. })
        ));
    }
}
