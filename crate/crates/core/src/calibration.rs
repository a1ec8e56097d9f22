//! Offline fitting of shape-specific Newton-Schulz coefficients.
//!
//! Because the iteration acts on singular values alone, a matrix shape is
//! represented by the spectra of Frobenius-normalized samples of that shape.
//! The fit minimizes the mean over samples of `sum_i (g^T(sigma_i) - 1)^2`
//! by gradient descent, with the gradient propagated exactly through the
//! `T`-fold composition in forward mode.

use crate::matrix::{frobenius_norm, svd, DenseMatrix, MatrixError};
use crate::orthogonalize::{CoefficientTable, NsCoefficients, ShapeKey};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Any intermediate `|g^k(sigma)|` above this counts as divergence.
pub const OVERFLOW_LIMIT: f64 = 1e6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CalibrationError {
    #[error("composition diverged: |g^{step}(sigma)| = {value:e}")]
    NumericOverflow { step: usize, value: f64 },
    #[error("no spectral samples")]
    EmptySamples,
    #[error("samples mix shapes {0} and {1}")]
    MixedShapes(ShapeKey, ShapeKey),
    #[error("captured matrix has shape {found}, expected {expected}")]
    ShapeMismatch { expected: ShapeKey, found: ShapeKey },
    #[error("every visited iterate diverged")]
    AllStepsDiverged,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleOrigin {
    Captured,
    Synthetic,
}

/// Singular values of one Frobenius-normalized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    shape: ShapeKey,
    sigmas: Vec<f64>,
    origin: SampleOrigin,
}

impl SpectralSample {
    /// Validates `sum sigma^2 = 1` (to 1e-6) and `len = min(rows, cols)`.
    pub fn new(shape: ShapeKey, sigmas: Vec<f64>, origin: SampleOrigin) -> Result<Self, CalibrationError> {
        if sigmas.len() != shape.rank() {
            return Err(CalibrationError::InvalidSample(format!(
                "{} singular values for shape {shape}",
                sigmas.len()
            )));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(CalibrationError::InvalidSample("negative or non-finite singular value".into()));
        }
        let energy: f64 = sigmas.iter().map(|s| s * s).sum();
        if (energy - 1.0).abs() > 1e-6 {
            return Err(CalibrationError::InvalidSample(format!(
                "sum of squared singular values is {energy}, expected 1"
            )));
        }
        Ok(Self { shape, sigmas, origin })
    }

    /// Normalizes `m` by its Frobenius norm and takes its singular values.
    pub fn from_matrix(m: &DenseMatrix, origin: SampleOrigin) -> Result<Self, CalibrationError> {
        let norm = frobenius_norm(m);
        if norm == 0.0 {
            return Err(CalibrationError::InvalidSample("zero matrix".into()));
        }
        let dec = svd(&m.scale(1.0 / norm))?;
        Self::new(ShapeKey::of(m), dec.singular_values, origin)
    }

    pub fn shape(&self) -> ShapeKey {
        self.shape
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn origin(&self) -> SampleOrigin {
        self.origin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub iterations: usize,
    /// (captured parts, synthetic parts)
    pub mix_ratio: (usize, usize),
    /// synthetic samples drawn when there is nothing captured to mix with
    pub synthetic_samples: usize,
    pub steps: usize,
    /// step on the per-singular-value loss
    pub step_size: f64,
    pub init: NsCoefficients,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            mix_ratio: (1, 3),
            synthetic_samples: 8,
            steps: 2000,
            step_size: 1e-2,
            init: NsCoefficients::MUON,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |msg: &str| Err(CalibrationError::InvalidConfig(msg.into()));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.mix_ratio.0 + self.mix_ratio.1 == 0 {
            return bad("mix ratio must have at least one part");
        }
        if self.steps == 0 {
            return bad("steps must be >= 1");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        self.init
            .validate()
            .map_err(|e| CalibrationError::InvalidConfig(e.to_string()))
    }

    fn init_coefficients(&self) -> NsCoefficients {
        self.init.with_iterations(self.iterations)
    }
}

/// Mixes a 64-bit seed with extra words (splitmix64 finalizer).
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut z = seed;
    for &w in words {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(w);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Builds a calibration set for one shape.
///
/// Captured matrices are interleaved with seeded Gaussian matrices at
/// `mix_ratio`: with `(1, 3)` every captured sample is followed by three
/// synthetic ones. With nothing captured (or zero captured parts) the set is
/// `synthetic_samples` Gaussian draws.
pub fn build_sample_set(
    captured: &[DenseMatrix],
    shape: ShapeKey,
    config: &CalibrationConfig,
) -> Result<Vec<SpectralSample>, CalibrationError> {
    config.validate()?;
    let (cap_parts, syn_parts) = config.mix_ratio;
    for m in captured {
        let found = ShapeKey::of(m);
        if found != shape {
            return Err(CalibrationError::ShapeMismatch { expected: shape, found });
        }
    }
    let use_captured = if cap_parts == 0 { &[][..] } else { captured };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[shape.rows as u64, shape.cols as u64]));
    let mut synthetic = || -> Result<SpectralSample, CalibrationError> {
        let m = DenseMatrix::random_gaussian(shape.rows, shape.cols, &mut rng);
        SpectralSample::from_matrix(&m, SampleOrigin::Synthetic)
    };

    let mut out = Vec::new();
    if use_captured.is_empty() {
        for _ in 0..config.synthetic_samples {
            out.push(synthetic()?);
        }
        return Ok(out);
    }
    for chunk in use_captured.chunks(cap_parts) {
        for m in chunk {
            out.push(SpectralSample::from_matrix(m, SampleOrigin::Captured)?);
        }
        // synthetic count scales with the captured count in this chunk
        let n_syn = (chunk.len() * syn_parts).div_ceil(cap_parts);
        for _ in 0..n_syn {
            out.push(synthetic()?);
        }
    }
    Ok(out)
}

fn check_samples(samples: &[SpectralSample]) -> Result<ShapeKey, CalibrationError> {
    let first = samples.first().ok_or(CalibrationError::EmptySamples)?.shape;
    if let Some(other) = samples.iter().find(|s| s.shape != first) {
        return Err(CalibrationError::MixedShapes(first, other.shape));
    }
    Ok(first)
}

/// Mean over samples of `sum_i (g^T(sigma_i) - 1)^2`.
pub fn newton_loss(coeffs: &NsCoefficients, samples: &[SpectralSample]) -> Result<f64, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptySamples);
    }
    let mut total = 0.0;
    for sample in samples {
        for &sigma in &sample.sigmas {
            let mut x = sigma;
            for step in 1..=coeffs.iterations {
                x = coeffs.apply(x);
                guard(step, x)?;
            }
            total += (x - 1.0) * (x - 1.0);
        }
    }
    Ok(total / samples.len() as f64)
}

#[inline]
fn guard(step: usize, value: f64) -> Result<(), CalibrationError> {
    if value.abs() > OVERFLOW_LIMIT || !value.is_finite() {
        Err(CalibrationError::NumericOverflow { step, value })
    } else {
        Ok(())
    }
}

/// Exact gradient of [`newton_loss`] with respect to `(a, b, c)`.
///
/// Each composition step carries `(x, dx/da, dx/db, dx/dc)`: the chain factor
/// `g'(x) = a + 3 b x^2 + 5 c x^4` scales the inner sensitivities and the
/// direct terms `(x, x^3, x^5)` are added on top.
pub fn loss_gradient(coeffs: &NsCoefficients, samples: &[SpectralSample]) -> Result<[f64; 3], CalibrationError> {
    Ok(loss_and_gradient(coeffs, samples)?.1)
}

pub fn loss_and_gradient(
    coeffs: &NsCoefficients,
    samples: &[SpectralSample],
) -> Result<(f64, [f64; 3]), CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptySamples);
    }
    let (a, b, c) = (coeffs.a, coeffs.b, coeffs.c);
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    for sample in samples {
        for &sigma in &sample.sigmas {
            let mut x = sigma;
            let mut dx = [0.0; 3];
            for step in 1..=coeffs.iterations {
                let x2 = x * x;
                let x3 = x2 * x;
                let x5 = x3 * x2;
                let slope = a + 3.0 * b * x2 + 5.0 * c * x2 * x2;
                dx = [slope * dx[0] + x, slope * dx[1] + x3, slope * dx[2] + x5];
                x = coeffs.apply(x);
                guard(step, x)?;
            }
            let r = x - 1.0;
            loss += r * r;
            for k in 0..3 {
                grad[k] += 2.0 * r * dx[k];
            }
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, grad.map(|g| g / n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub shape: ShapeKey,
    pub coefficients: NsCoefficients,
    pub init_loss: f64,
    pub final_loss: f64,
    /// step index (0 = init) at which the returned iterate was visited
    pub best_step: usize,
    pub n_captured: usize,
    pub n_synthetic: usize,
}

/// Gradient descent from `config.init`, returning the best iterate visited.
///
/// The returned loss never exceeds the loss at the initial coefficients. The
/// step acts on the per-singular-value loss (the objective divided by
/// `min(rows, cols)`) so one step size serves every shape. If an iterate
/// diverges, descent resumes from the best iterate with half the step.
pub fn calibrate_shape(
    samples: &[SpectralSample],
    config: &CalibrationConfig,
) -> Result<CalibrationOutcome, CalibrationError> {
    config.validate()?;
    let shape = check_samples(samples)?;
    let init = config.init_coefficients();
    let scale = 1.0 / shape.rank() as f64;

    let mut current = init;
    let mut best: Option<(NsCoefficients, f64, usize)> = None;
    let mut init_loss = f64::INFINITY;
    let mut step_size = config.step_size;
    let mut step = 0;
    while step <= config.steps {
        match loss_and_gradient(&current, samples) {
            Ok((loss, grad)) => {
                if step == 0 {
                    init_loss = loss;
                }
                if best.is_none_or(|(_, l, _)| loss < l) {
                    best = Some((current, loss, step));
                }
                current.a -= step_size * scale * grad[0];
                current.b -= step_size * scale * grad[1];
                current.c -= step_size * scale * grad[2];
            }
            Err(CalibrationError::NumericOverflow { .. }) => match best {
                Some((coeffs, _, _)) => {
                    current = coeffs;
                    step_size *= 0.5;
                }
                None => return Err(CalibrationError::AllStepsDiverged),
            },
            Err(e) => return Err(e),
        }
        step += 1;
    }
    let (coefficients, final_loss, best_step) = best.ok_or(CalibrationError::AllStepsDiverged)?;
    let n_captured = samples.iter().filter(|s| s.origin == SampleOrigin::Captured).count();
    Ok(CalibrationOutcome {
        shape,
        coefficients,
        init_loss,
        final_loss,
        best_step,
        n_captured,
        n_synthetic: samples.len() - n_captured,
    })
}

/// Calibrates every shape and collects the results into a table whose
/// default entry is `config.init`.
pub fn calibrate_table(
    sample_sets: &[Vec<SpectralSample>],
    config: &CalibrationConfig,
) -> (CoefficientTable, Vec<Result<CalibrationOutcome, CalibrationError>>) {
    let mut table = CoefficientTable::new(config.init_coefficients());
    let outcomes: Vec<_> = sample_sets.iter().map(|s| calibrate_shape(s, config)).collect();
    for outcome in outcomes.iter().flatten() {
        table.insert(outcome.shape.rows, outcome.shape.cols, outcome.coefficients);
    }
    let (c, s) = config.mix_ratio;
    table.set_meta("mix_ratio", format!("{c}:{s}"));
    table.set_meta("steps", config.steps.to_string());
    table.set_meta("step_size", config.step_size.to_string());
    table.set_meta("seed", config.seed.to_string());
    for outcome in outcomes.iter().flatten() {
        table.set_meta(
            format!("shape {}", outcome.shape),
            format!(
                "captured={} synthetic={} init_loss={} final_loss={}",
                outcome.n_captured, outcome.n_synthetic, outcome.init_loss, outcome.final_loss
            ),
        );
    }
    (table, outcomes)
}
