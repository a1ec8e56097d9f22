//! Outlier injection into gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use rootopt::calibration::derive_seed;
use rootopt::DenseMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NoiseError {
    #[error("spike probability must lie in [0, 1], got {0}")]
    Probability(f64),
    #[error("spike scale must be positive, got {0}")]
    Scale(f64),
    #[error("Student-t degrees of freedom must be positive, got {0}")]
    DegreesOfFreedom(f64),
}

/// Each gradient entry is independently multiplied by `spike_scale` with
/// probability `spike_probability`. With `heavy_tail_df` set, every entry
/// also receives additive Student-t noise scaled by the RMS of its matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseInjector {
    pub spike_probability: f64,
    pub spike_scale: f64,
    pub heavy_tail_df: Option<f64>,
    pub seed: u64,
}

impl Default for NoiseInjector {
    fn default() -> Self {
        Self {
            spike_probability: 0.0,
            spike_scale: 100.0,
            heavy_tail_df: None,
            seed: 0,
        }
    }
}

impl NoiseInjector {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn spikes(probability: f64, scale: f64, seed: u64) -> Self {
        Self {
            spike_probability: probability,
            spike_scale: scale,
            heavy_tail_df: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(NoiseError::Probability(self.spike_probability));
        }
        if !(self.spike_scale.is_finite() && self.spike_scale > 0.0) {
            return Err(NoiseError::Scale(self.spike_scale));
        }
        if let Some(df) = self.heavy_tail_df {
            if !(df.is_finite() && df > 0.0) {
                return Err(NoiseError::DegreesOfFreedom(df));
            }
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.spike_probability > 0.0 || self.heavy_tail_df.is_some()
    }

    /// Injection stream for one run.
    pub fn stream(&self, run_seed: u64) -> NoiseStream {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[run_seed])),
            injector: self.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    injector: NoiseInjector,
}

impl NoiseStream {
    /// Perturbs `grads` in place and returns the number of spiked entries.
    pub fn inject(&mut self, grads: &mut [DenseMatrix]) -> usize {
        if !self.injector.is_active() {
            return 0;
        }
        let p = self.injector.spike_probability;
        let scale = self.injector.spike_scale;
        let student = self.injector.heavy_tail_df.map(|df| StudentT::new(df).expect("validated df"));
        let mut spiked = 0;
        for g in grads.iter_mut() {
            let rms = g.frobenius_norm() / (g.len() as f64).sqrt();
            for v in g.as_mut_slice() {
                if let Some(t) = &student {
                    *v += rms * t.sample(&mut self.rng);
                }
                if p > 0.0 && self.rng.random::<f64>() < p {
                    *v *= scale;
                    spiked += 1;
                }
            }
        }
        spiked
    }
}
