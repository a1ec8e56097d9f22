//! TOML configuration for every subcommand.
//!
//! Each config deserializes with defaults for omitted keys and serializes
//! back out for `--print-config`.

use crate::error::{CliError, CliResult};
use rootopt::matrix::DumpDtype;
use rootopt::optimizers::{Hyperparams, MomentumCapture, OptimizerConfig, OptimizerKind, RmsScale, Schedule};
use rootopt::robustify::ThresholdPolicy;
use rootopt::{CoefficientTable, NsCoefficients};
use rootopt_bench::{NoiseInjector, Precision, TaskKind, TaskSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
        }
    }
}

pub fn render<T: Serialize>(config: &T) -> CliResult<String> {
    toml::to_string(config).map_err(|e| CliError::config(format!("cannot render config: {e}")))
}

/// Newton-Schulz coefficients given by name or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffSpec {
    Named(String),
    Explicit { a: f64, b: f64, c: f64 },
}

impl CoeffSpec {
    pub fn resolve(&self, iterations: usize) -> CliResult<NsCoefficients> {
        let base = match self {
            CoeffSpec::Named(name) => match name.as_str() {
                "muon" => NsCoefficients::MUON,
                "classic" => NsCoefficients::CLASSIC,
                other => return Err(CliError::config(format!("unknown coefficient set `{other}`"))),
            },
            CoeffSpec::Explicit { a, b, c } => NsCoefficients {
                a: *a,
                b: *b,
                c: *c,
                iterations,
            },
        };
        let coeffs = base.with_iterations(iterations);
        coeffs.validate().map_err(CliError::config)?;
        Ok(coeffs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// `[rows, cols]` pairs
    pub shapes: Vec<[usize; 2]>,
    pub iterations: usize,
    pub steps: usize,
    pub step_size: f64,
    /// captured : synthetic
    pub mix_ratio: [usize; 2],
    pub synthetic_samples: usize,
    pub init: CoeffSpec,
    /// files or directories of ROOTMTX1 dumps
    pub captured: Vec<PathBuf>,
    pub seed: u64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            shapes: vec![[64, 64], [64, 512]],
            iterations: 5,
            steps: 2000,
            step_size: 1e-2,
            mix_ratio: [1, 3],
            synthetic_samples: 8,
            init: CoeffSpec::Named("muon".into()),
            captured: Vec::new(),
            seed: 0,
        }
    }
}

impl CalibrateConfig {
    pub fn calibration(&self) -> CliResult<rootopt::calibration::CalibrationConfig> {
        let cfg = rootopt::calibration::CalibrationConfig {
            iterations: self.iterations,
            mix_ratio: (self.mix_ratio[0], self.mix_ratio[1]),
            synthetic_samples: self.synthetic_samples,
            steps: self.steps,
            step_size: self.step_size,
            init: self.init.resolve(self.iterations)?,
            seed: self.seed,
        };
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchOrthConfig {
    pub shapes: Vec<[usize; 2]>,
    /// Gaussian matrices per shape
    pub samples: usize,
    pub iterations: usize,
    pub strategies: Vec<String>,
    /// coefficient table for the adaptive strategy; calibrated in-process when absent
    pub table: Option<PathBuf>,
    pub calibration_steps: usize,
    pub calibration_samples: usize,
    pub seed: u64,
}

impl Default for BenchOrthConfig {
    fn default() -> Self {
        Self {
            shapes: vec![[128, 128], [128, 512]],
            samples: 4,
            iterations: 5,
            strategies: vec!["muon-fixed".into(), "classic-quintic".into(), "adaptive".into()],
            table: None,
            calibration_steps: 2000,
            calibration_samples: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSpec {
    Quantile(f64),
    FixedEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant,
    Cosine { warmup_steps: u64, final_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    /// name used in reports; defaults to the optimizer kind
    pub label: Option<String>,
    pub kind: String,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub matrix_weight_decay: f64,
    pub elementwise_lr: Option<f64>,
    pub threshold: ThresholdSpec,
    pub rms_factor: f64,
    pub rms_scale_by_dim: bool,
    pub schedule: ScheduleSpec,
    /// coefficient table for ROOT; the Muon triple everywhere when absent
    pub table: Option<PathBuf>,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            label: None,
            kind: "root".into(),
            lr: hp.lr,
            momentum: hp.momentum,
            beta1: hp.beta1,
            beta2: hp.beta2,
            adam_eps: hp.adam_eps,
            weight_decay: hp.weight_decay,
            matrix_weight_decay: hp.matrix_weight_decay,
            elementwise_lr: hp.elementwise_lr,
            threshold: ThresholdSpec::Quantile(0.90),
            rms_factor: hp.rms.factor,
            rms_scale_by_dim: hp.rms.scale_by_dim,
            schedule: ScheduleSpec::Cosine {
                warmup_steps: 100,
                final_fraction: 0.1,
            },
            table: None,
        }
    }
}

impl OptimizerSpec {
    pub fn with_kind(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            ..Self::default()
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.clone())
    }

    /// Builds the optimizer config; `total_steps` anchors the cosine schedule.
    pub fn build(&self, total_steps: u64) -> CliResult<OptimizerConfig> {
        let kind = OptimizerKind::parse(&self.kind)
            .ok_or_else(|| CliError::config(format!("unknown optimizer `{}`", self.kind)))?;
        let hyper = Hyperparams {
            lr: self.lr,
            momentum: self.momentum,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            weight_decay: self.weight_decay,
            matrix_weight_decay: self.matrix_weight_decay,
            elementwise_lr: self.elementwise_lr,
            threshold: match self.threshold {
                ThresholdSpec::Quantile(p) => ThresholdPolicy::Quantile(p),
                ThresholdSpec::FixedEpsilon(e) => ThresholdPolicy::FixedEpsilon(e),
            },
            rms: RmsScale {
                factor: self.rms_factor,
                scale_by_dim: self.rms_scale_by_dim,
            },
            schedule: match self.schedule {
                ScheduleSpec::Constant => Schedule::Constant,
                ScheduleSpec::Cosine {
                    warmup_steps,
                    final_fraction,
                } => Schedule::Cosine {
                    warmup_steps,
                    total_steps,
                    final_fraction,
                },
            },
        };
        hyper.validate().map_err(CliError::config)?;
        let mut config = OptimizerConfig::new(kind, hyper);
        if let Some(path) = &self.table {
            let table = CoefficientTable::load(path)
                .map_err(|e| CliError::config(format!("cannot load table {}: {e}", path.display())))?;
            config = config.with_table(Arc::new(table));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtypeSpec {
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSpec {
    pub stride: u64,
    pub dtype: DtypeSpec,
}

impl Default for CaptureSpec {
    fn default() -> Self {
        Self {
            stride: 50,
            dtype: DtypeSpec::F64,
        }
    }
}

impl CaptureSpec {
    pub fn build(&self, dir: &Path) -> CliResult<MomentumCapture> {
        if self.stride == 0 {
            return Err(CliError::config("capture stride must be at least 1"));
        }
        let mut capture = MomentumCapture::new(dir, self.stride);
        capture.dtype = match self.dtype {
            DtypeSpec::F64 => DumpDtype::F64,
            DtypeSpec::F32 => DumpDtype::F32,
        };
        Ok(capture)
    }
}

fn default_task() -> TaskSpec {
    TaskSpec::default_for(TaskKind::MatrixRegression, 0)
}

fn default_noise() -> NoiseInjector {
    NoiseInjector::spikes(0.01, 100.0, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub precision: Precision,
    /// write `loss.svg`
    pub plot: bool,
    pub task: TaskSpec,
    pub optimizer: OptimizerSpec,
    pub noise: NoiseInjector,
    /// momentum dumps under `momentum/` when present
    pub capture: Option<CaptureSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            precision: Precision::F64,
            plot: false,
            task: default_task(),
            optimizer: OptimizerSpec::default(),
            noise: default_noise(),
            capture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub steps: u64,
    /// first seed; runs use `seed .. seed + runs`
    pub seed: u64,
    pub runs: u64,
    pub task: TaskSpec,
    pub noise: NoiseInjector,
    pub configs: Vec<OptimizerSpec>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            seed: 0,
            runs: 10,
            task: default_task(),
            noise: default_noise(),
            configs: vec![
                OptimizerSpec::with_kind("muon"),
                OptimizerSpec {
                    label: Some("root-p0.90".into()),
                    ..OptimizerSpec::with_kind("root")
                },
            ],
        }
    }
}

impl CompareConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (self.seed..self.seed + self.runs).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradStatsConfig {
    /// ROOTMTX1 files or directories; a live run is used when empty
    pub dumps: Vec<PathBuf>,
    pub steps: u64,
    /// sample gradients every this many steps of the live run
    pub every: u64,
    pub task: TaskSpec,
    pub optimizer: OptimizerSpec,
    pub noise: NoiseInjector,
}

impl Default for GradStatsConfig {
    fn default() -> Self {
        Self {
            dumps: Vec::new(),
            steps: 200,
            every: 10,
            task: default_task(),
            optimizer: OptimizerSpec::with_kind("muon"),
            noise: default_noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// finished run directory to summarize
    pub input: Option<PathBuf>,
    /// write `loss.svg` when the input has a run log
    pub plot: bool,
}
