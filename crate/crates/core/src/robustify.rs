//! Soft-threshold outlier suppression.
//!
//! A momentum matrix `M` is split into an outlier part `O = T_eps(M)` (the
//! elementwise soft threshold) and a base part `B = M - O`, which is exactly
//! the clamp of `M` to `[-eps, eps]`. ROOT orthogonalizes `B` and drops `O`.

use crate::matrix::{frobenius_norm, quantile_abs, DenseMatrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("fixed threshold must be finite and non-negative, got {0}")]
    Epsilon(f64),
    #[error("quantile level must lie in [0, 1], got {0}")]
    Quantile(f64),
}

/// How the threshold `eps` is chosen for a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    FixedEpsilon(f64),
    /// `eps = quantile(|M|, p)`, recomputed for every matrix at every step.
    Quantile(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Quantile(0.90)
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            ThresholdPolicy::FixedEpsilon(eps) if !(eps.is_finite() && eps >= 0.0) => Err(PolicyError::Epsilon(eps)),
            ThresholdPolicy::Quantile(p) if !(0.0..=1.0).contains(&p) => Err(PolicyError::Quantile(p)),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, m: &DenseMatrix) -> f64 {
        match *self {
            ThresholdPolicy::FixedEpsilon(eps) => eps,
            ThresholdPolicy::Quantile(p) => quantile_abs(m, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// entries clamped to `[-eps, eps]`
    pub base: DenseMatrix,
    /// soft-thresholded entries, zero wherever `|m| <= eps`
    pub outliers: DenseMatrix,
    pub epsilon_used: f64,
}

impl Decomposition {
    /// Fraction of entries with a nonzero outlier component.
    pub fn outlier_fraction(&self) -> f64 {
        let nonzero = self.outliers.as_slice().iter().filter(|v| **v != 0.0).count();
        nonzero as f64 / self.outliers.len() as f64
    }

    /// `||O||_F / ||M||_F`, zero for a zero input.
    pub fn outlier_mass_ratio(&self) -> f64 {
        let total = frobenius_norm(&self.base.add(&self.outliers));
        if total == 0.0 {
            0.0
        } else {
            frobenius_norm(&self.outliers) / total
        }
    }
}

/// `sign(x) * max(|x| - eps, 0)`
#[inline]
pub fn soft_threshold(x: f64, eps: f64) -> f64 {
    debug_assert!(eps >= 0.0);
    if x > eps {
        x - eps
    } else if x < -eps {
        x + eps
    } else {
        0.0
    }
}

/// Scalar proximal objective `0.5 (o - x)^2 + eps |o|`, minimized by `soft_threshold(x, eps)`.
pub fn prox_objective(o: f64, x: f64, eps: f64) -> f64 {
    0.5 * (o - x) * (o - x) + eps * o.abs()
}

pub fn decompose(m: &DenseMatrix, policy: &ThresholdPolicy) -> Decomposition {
    let eps = policy.resolve(m);
    decompose_with(m, eps)
}

/// Decomposition at an explicit threshold.
pub fn decompose_with(m: &DenseMatrix, eps: f64) -> Decomposition {
    assert!(eps >= 0.0, "threshold must be non-negative");
    // clamp is computed directly so B stays bitwise inside [-eps, eps];
    // m - clamp(m) reproduces the soft threshold bit for bit
    let base = m.map(|x| x.clamp(-eps, eps));
    let outliers = m.map(|x| soft_threshold(x, eps));
    Decomposition {
        base,
        outliers,
        epsilon_used: eps,
    }
}
