//! Browser bindings for three rootopt operations. Every export is a plain
//! function over numbers and float arrays, so the same code runs natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rootopt::matrix::{polar_factor, svd};
use rootopt::orthogonalize::{ns_orthogonalize, orthogonalization_mse, relative_error};
use rootopt::robustify::{decompose, ThresholdPolicy};
use rootopt::{DenseMatrix, NsCoefficients};
use wasm_bindgen::prelude::*;

/// Largest side length the demo accepts.
pub const MAX_SIDE: usize = 256;

fn coefficients(a: f64, b: f64, c: f64, iterations: usize) -> Result<NsCoefficients, JsError> {
    if iterations == 0 || iterations > 20 {
        return Err(JsError::new("iterations must be in 1..=20"));
    }
    NsCoefficients::new(a, b, c, iterations).map_err(|e| JsError::new(&e.to_string()))
}

/// `g^T(x)` at `points` evenly spaced `x` in `[0, x_max]`.
#[wasm_bindgen]
pub fn ns_curve(a: f64, b: f64, c: f64, iterations: usize, x_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let coeffs = coefficients(a, b, c, iterations)?;
    if points < 2 || !(x_max.is_finite() && x_max > 0.0) {
        return Err(JsError::new("need at least 2 points and a positive range"));
    }
    Ok((0..points)
        .map(|i| coeffs.compose(x_max * i as f64 / (points - 1) as f64))
        .collect())
}

#[wasm_bindgen]
pub struct Decomposed {
    base: Vec<f64>,
    outliers: Vec<f64>,
    epsilon: f64,
    outlier_fraction: f64,
    outlier_mass_ratio: f64,
}

#[wasm_bindgen]
impl Decomposed {
    #[wasm_bindgen(getter)]
    pub fn base(&self) -> Vec<f64> {
        self.base.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn outliers(&self) -> Vec<f64> {
        self.outliers.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[wasm_bindgen(getter)]
    pub fn outlier_fraction(&self) -> f64 {
        self.outlier_fraction
    }

    #[wasm_bindgen(getter)]
    pub fn outlier_mass_ratio(&self) -> f64 {
        self.outlier_mass_ratio
    }
}

/// Splits `values` into a clamped base and soft-thresholded outliers at the
/// `quantile` of their magnitudes.
#[wasm_bindgen]
pub fn soft_threshold_decompose(values: Vec<f64>, quantile: f64) -> Result<Decomposed, JsError> {
    let policy = ThresholdPolicy::Quantile(quantile);
    policy.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let n = values.len();
    let m = DenseMatrix::new(1, n, values).map_err(|e| JsError::new(&e.to_string()))?;
    if n == 0 || !m.is_finite() {
        return Err(JsError::new("need at least one finite value"));
    }
    let d = decompose(&m, &policy);
    Ok(Decomposed {
        epsilon: d.epsilon_used,
        outlier_fraction: d.outlier_fraction(),
        outlier_mass_ratio: d.outlier_mass_ratio(),
        base: d.base.into_vec(),
        outliers: d.outliers.into_vec(),
    })
}

#[wasm_bindgen]
pub struct OrthReport {
    sigma_before: Vec<f64>,
    sigma_after: Vec<f64>,
    relative_error: f64,
    mse: f64,
}

#[wasm_bindgen]
impl OrthReport {
    /// singular values of the Frobenius-normalized input, descending
    #[wasm_bindgen(getter)]
    pub fn sigma_before(&self) -> Vec<f64> {
        self.sigma_before.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn sigma_after(&self) -> Vec<f64> {
        self.sigma_after.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn relative_error(&self) -> f64 {
        self.relative_error
    }

    #[wasm_bindgen(getter)]
    pub fn mse(&self) -> f64 {
        self.mse
    }
}

/// Orthogonalizes a seeded Gaussian `rows x cols` matrix and measures it
/// against the SVD polar factor.
#[wasm_bindgen]
pub fn orthogonalize_gaussian(
    rows: usize,
    cols: usize,
    seed: u64,
    a: f64,
    b: f64,
    c: f64,
    iterations: usize,
) -> Result<OrthReport, JsError> {
    if rows == 0 || cols == 0 || rows > MAX_SIDE || cols > MAX_SIDE {
        return Err(JsError::new(&format!("sides must be in 1..={MAX_SIDE}")));
    }
    let coeffs = coefficients(a, b, c, iterations)?;
    let m = DenseMatrix::random_gaussian(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed));
    let err = |e: &dyn std::fmt::Display| JsError::new(&e.to_string());
    let exact = polar_factor(&m).map_err(|e| err(&e))?;
    let out = ns_orthogonalize(&m, &coeffs).map_err(|e| err(&e))?;
    let norm = m.frobenius_norm();
    let before = svd(&m).map_err(|e| err(&e))?;
    let after = svd(&out).map_err(|e| err(&e))?;
    Ok(OrthReport {
        sigma_before: before.singular_values.iter().map(|s| s / norm).collect(),
        sigma_after: after.singular_values,
        relative_error: relative_error(&out, &exact).map_err(|e| err(&e))?,
        mse: orthogonalization_mse(&out, &exact).map_err(|e| err(&e))?,
    })
}
