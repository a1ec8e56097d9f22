//! Synthetic objectives with hand-written gradients.
//!
//! Every task checks its analytic gradient against central differences when
//! it is built; a task that fails the check is never handed out.

mod attention;
mod factorization;
mod mlp;
mod regression;

use attention::AttentionLm;
use factorization::Factorization;
use mlp::Mlp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regression::Regression;
use rootopt::calibration::derive_seed;
use rootopt::optimizers::ParamSpec;
use rootopt::DenseMatrix;
use serde::{Deserialize, Serialize};

/// Largest dimension any task may use.
pub const MAX_DIM: usize = 1024;
/// Relative tolerance of the construction-time gradient check.
pub const GRADIENT_RTOL: f64 = 1e-4;
pub const GRADIENT_CHECK_POINTS: usize = 10;

const FD_STEP: f64 = 1e-5;
const PROBE_SPREAD: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("invalid task dimensions: {0}")]
    InvalidDims(String),
    #[error("gradient of `{param}` disagrees with finite differences (relative error {rel_error:e})")]
    GradientCheck { param: String, rel_error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    MatrixRegression,
    NonConvexFactorization,
    TinyMlpClassification,
    TinyAttentionLm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::MatrixRegression,
        TaskKind::NonConvexFactorization,
        TaskKind::TinyMlpClassification,
        TaskKind::TinyAttentionLm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::MatrixRegression => "matrix-regression",
            TaskKind::NonConvexFactorization => "non-convex-factorization",
            TaskKind::TinyMlpClassification => "tiny-mlp-classification",
            TaskKind::TinyAttentionLm => "tiny-attention-lm",
        }
    }
}

/// Task family and its dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskShape {
    /// `min ||A W - B||_F^2`, `A` samples x inputs, `W` inputs x outputs
    MatrixRegression {
        samples: usize,
        inputs: usize,
        outputs: usize,
        noise_std: f64,
    },
    /// `min ||U V^T - C||_F^2` with a rank-`target_rank` target plus noise
    NonConvexFactorization {
        rows: usize,
        cols: usize,
        rank: usize,
        target_rank: usize,
        noise_std: f64,
    },
    TinyMlpClassification {
        samples: usize,
        inputs: usize,
        hidden: usize,
        classes: usize,
    },
    TinyAttentionLm {
        vocab: usize,
        context: usize,
        model_dim: usize,
        sequences: usize,
    },
}

impl TaskShape {
    pub fn default_for(kind: TaskKind) -> Self {
        match kind {
            TaskKind::MatrixRegression => TaskShape::MatrixRegression {
                samples: 256,
                inputs: 64,
                outputs: 32,
                noise_std: 0.1,
            },
            TaskKind::NonConvexFactorization => TaskShape::NonConvexFactorization {
                rows: 64,
                cols: 48,
                rank: 8,
                target_rank: 8,
                noise_std: 0.1,
            },
            TaskKind::TinyMlpClassification => TaskShape::TinyMlpClassification {
                samples: 256,
                inputs: 32,
                hidden: 64,
                classes: 8,
            },
            TaskKind::TinyAttentionLm => TaskShape::TinyAttentionLm {
                vocab: 16,
                context: 16,
                model_dim: 32,
                sequences: 32,
            },
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            TaskShape::MatrixRegression { .. } => TaskKind::MatrixRegression,
            TaskShape::NonConvexFactorization { .. } => TaskKind::NonConvexFactorization,
            TaskShape::TinyMlpClassification { .. } => TaskKind::TinyMlpClassification,
            TaskShape::TinyAttentionLm { .. } => TaskKind::TinyAttentionLm,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let (dims, noise): (Vec<(&str, usize)>, Option<f64>) = match *self {
            TaskShape::MatrixRegression {
                samples,
                inputs,
                outputs,
                noise_std,
            } => (vec![("samples", samples), ("inputs", inputs), ("outputs", outputs)], Some(noise_std)),
            TaskShape::NonConvexFactorization {
                rows,
                cols,
                rank,
                target_rank,
                noise_std,
            } => {
                if rank > rows.min(cols) || target_rank > rows.min(cols) {
                    return Err(TaskError::InvalidDims("rank exceeds min(rows, cols)".into()));
                }
                (
                    vec![("rows", rows), ("cols", cols), ("rank", rank), ("target_rank", target_rank)],
                    Some(noise_std),
                )
            }
            TaskShape::TinyMlpClassification {
                samples,
                inputs,
                hidden,
                classes,
            } => {
                if classes < 2 {
                    return Err(TaskError::InvalidDims("need at least 2 classes".into()));
                }
                (
                    vec![("samples", samples), ("inputs", inputs), ("hidden", hidden), ("classes", classes)],
                    None,
                )
            }
            TaskShape::TinyAttentionLm {
                vocab,
                context,
                model_dim,
                sequences,
            } => {
                if vocab < 2 {
                    return Err(TaskError::InvalidDims("need a vocabulary of at least 2".into()));
                }
                (
                    vec![("vocab", vocab), ("context", context), ("model_dim", model_dim), ("sequences", sequences)],
                    None,
                )
            }
        };
        for (name, value) in dims {
            if value == 0 || value > MAX_DIM {
                return Err(TaskError::InvalidDims(format!("{name} = {value} outside 1..={MAX_DIM}")));
            }
        }
        if let Some(std) = noise {
            if !(std.is_finite() && std >= 0.0) {
                return Err(TaskError::InvalidDims(format!("noise_std = {std}")));
            }
        }
        Ok(())
    }
}

/// A task family, its dimensions and the seed for data and initialization.
///
/// When deserialized, dimensions left out take the defaults of the family
/// named by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskSpecRepr")]
pub struct TaskSpec {
    #[serde(flatten)]
    pub shape: TaskShape,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpecRepr {
    kind: TaskKind,
    #[serde(default)]
    seed: u64,
    samples: Option<usize>,
    inputs: Option<usize>,
    outputs: Option<usize>,
    noise_std: Option<f64>,
    rows: Option<usize>,
    cols: Option<usize>,
    rank: Option<usize>,
    target_rank: Option<usize>,
    hidden: Option<usize>,
    classes: Option<usize>,
    vocab: Option<usize>,
    context: Option<usize>,
    model_dim: Option<usize>,
    sequences: Option<usize>,
}

impl TryFrom<TaskSpecRepr> for TaskSpec {
    type Error = String;

    fn try_from(r: TaskSpecRepr) -> Result<Self, String> {
        let mut shape = TaskShape::default_for(r.kind);
        let mut used: Vec<&str> = Vec::new();
        let mut take = |slot: &mut usize, value: Option<usize>, name: &'static str| {
            if let Some(v) = value {
                *slot = v;
            }
            used.push(name);
        };
        match &mut shape {
            TaskShape::MatrixRegression {
                samples,
                inputs,
                outputs,
                noise_std,
            } => {
                take(samples, r.samples, "samples");
                take(inputs, r.inputs, "inputs");
                take(outputs, r.outputs, "outputs");
                *noise_std = r.noise_std.unwrap_or(*noise_std);
                used.push("noise_std");
            }
            TaskShape::NonConvexFactorization {
                rows,
                cols,
                rank,
                target_rank,
                noise_std,
            } => {
                take(rows, r.rows, "rows");
                take(cols, r.cols, "cols");
                take(rank, r.rank, "rank");
                take(target_rank, r.target_rank, "target_rank");
                *noise_std = r.noise_std.unwrap_or(*noise_std);
                used.push("noise_std");
            }
            TaskShape::TinyMlpClassification {
                samples,
                inputs,
                hidden,
                classes,
            } => {
                take(samples, r.samples, "samples");
                take(inputs, r.inputs, "inputs");
                take(hidden, r.hidden, "hidden");
                take(classes, r.classes, "classes");
            }
            TaskShape::TinyAttentionLm {
                vocab,
                context,
                model_dim,
                sequences,
            } => {
                take(vocab, r.vocab, "vocab");
                take(context, r.context, "context");
                take(model_dim, r.model_dim, "model_dim");
                take(sequences, r.sequences, "sequences");
            }
        }
        let given = [
            ("samples", r.samples.is_some()),
            ("inputs", r.inputs.is_some()),
            ("outputs", r.outputs.is_some()),
            ("noise_std", r.noise_std.is_some()),
            ("rows", r.rows.is_some()),
            ("cols", r.cols.is_some()),
            ("rank", r.rank.is_some()),
            ("target_rank", r.target_rank.is_some()),
            ("hidden", r.hidden.is_some()),
            ("classes", r.classes.is_some()),
            ("vocab", r.vocab.is_some()),
            ("context", r.context.is_some()),
            ("model_dim", r.model_dim.is_some()),
            ("sequences", r.sequences.is_some()),
        ];
        if let Some((name, _)) = given.iter().find(|(name, set)| *set && !used.contains(name)) {
            return Err(format!("`{name}` does not apply to {}", r.kind.name()));
        }
        Ok(TaskSpec { shape, seed: r.seed })
    }
}

impl TaskSpec {
    pub fn new(shape: TaskShape, seed: u64) -> Self {
        Self { shape, seed }
    }

    pub fn default_for(kind: TaskKind, seed: u64) -> Self {
        Self::new(TaskShape::default_for(kind), seed)
    }

    pub fn kind(&self) -> TaskKind {
        self.shape.kind()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            shape: self.shape.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Regression(Regression),
    Factorization(Factorization),
    Mlp(Mlp),
    Attention(AttentionLm),
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADIENT_RTOL
    }
}

/// A generated objective with verified gradients.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    spec: TaskSpec,
    model: Model,
    check: GradientCheck,
}

impl SyntheticTask {
    /// Generates data from `spec.seed` and verifies the gradient at
    /// [`GRADIENT_CHECK_POINTS`] random points.
    pub fn new(spec: TaskSpec) -> Result<Self, TaskError> {
        spec.shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0x7a5c]));
        let model = match spec.shape {
            TaskShape::MatrixRegression {
                samples,
                inputs,
                outputs,
                noise_std,
            } => Model::Regression(Regression::generate(samples, inputs, outputs, noise_std, &mut rng)),
            TaskShape::NonConvexFactorization {
                rows,
                cols,
                rank,
                target_rank,
                noise_std,
            } => Model::Factorization(Factorization::generate(rows, cols, rank, target_rank, noise_std, &mut rng)),
            TaskShape::TinyMlpClassification {
                samples,
                inputs,
                hidden,
                classes,
            } => Model::Mlp(Mlp::generate(samples, inputs, hidden, classes, &mut rng)),
            TaskShape::TinyAttentionLm {
                vocab,
                context,
                model_dim,
                sequences,
            } => Model::Attention(AttentionLm::generate(vocab, context, model_dim, sequences, &mut rng)),
        };
        let mut task = Self {
            spec,
            model,
            check: GradientCheck {
                probes: 0,
                max_rel_error: 0.0,
                worst_param: String::new(),
            },
        };
        let check = check_gradients(&task, GRADIENT_CHECK_POINTS, derive_seed(task.spec.seed, &[0x6e3d]));
        if !check.passed() {
            return Err(TaskError::GradientCheck {
                param: check.worst_param,
                rel_error: check.max_rel_error,
            });
        }
        task.check = check;
        Ok(task)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn kind(&self) -> TaskKind {
        self.spec.kind()
    }

    pub fn gradient_check(&self) -> &GradientCheck {
        &self.check
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match &self.model {
            Model::Regression(m) => m.param_specs(),
            Model::Factorization(m) => m.param_specs(),
            Model::Mlp(m) => m.param_specs(),
            Model::Attention(m) => m.param_specs(),
        }
    }

    pub fn initial_params(&self) -> Vec<DenseMatrix> {
        match &self.model {
            Model::Regression(m) => m.initial_params(),
            Model::Factorization(m) => m.initial_params(),
            Model::Mlp(m) => m.initial_params(),
            Model::Attention(m) => m.initial_params(),
        }
    }

    pub fn loss(&self, params: &[DenseMatrix]) -> f64 {
        match &self.model {
            Model::Regression(m) => m.loss(params),
            Model::Factorization(m) => m.loss(params),
            Model::Mlp(m) => m.loss(params),
            Model::Attention(m) => m.loss(params),
        }
    }

    pub fn loss_and_grad(&self, params: &[DenseMatrix]) -> (f64, Vec<DenseMatrix>) {
        match &self.model {
            Model::Regression(m) => m.loss_and_grad(params),
            Model::Factorization(m) => m.loss_and_grad(params),
            Model::Mlp(m) => m.loss_and_grad(params),
            Model::Attention(m) => m.loss_and_grad(params),
        }
    }

    /// Design matrix and targets `(A, B)` of a regression task.
    pub fn regression_data(&self) -> Option<(&DenseMatrix, &DenseMatrix)> {
        match &self.model {
            Model::Regression(m) => Some((&m.a, &m.b)),
            _ => None,
        }
    }
}

/// Compares the analytic gradient with central differences.
///
/// At each of `points` random parameter vectors (the initial point plus
/// Gaussian jitter), every parameter block is probed along the direction
/// `g/|g| + r/|r|` for a random `r`, so a wrongly scaled or wrongly signed
/// gradient cannot hide behind a nearly orthogonal probe.
pub fn check_gradients(task: &SyntheticTask, points: usize, seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = task.initial_params();
    let mut report = GradientCheck {
        probes: 0,
        max_rel_error: 0.0,
        worst_param: String::new(),
    };
    let names: Vec<String> = task.param_specs().into_iter().map(|s| s.name).collect();
    for _ in 0..points {
        let point: Vec<DenseMatrix> = base
            .iter()
            .map(|p| {
                let jitter = DenseMatrix::random_gaussian(p.rows(), p.cols(), &mut rng);
                p.add(&jitter.scale(PROBE_SPREAD))
            })
            .collect();
        let (loss, grads) = task.loss_and_grad(&point);
        for (block, grad) in grads.iter().enumerate() {
            let r = DenseMatrix::random_gaussian(grad.rows(), grad.cols(), &mut rng);
            let gn = grad.frobenius_norm();
            let mut dir = r.scale(1.0 / r.frobenius_norm());
            if gn > 0.0 {
                dir.axpy(1.0 / gn, grad);
            }
            let dir = dir.scale(1.0 / dir.frobenius_norm());

            let shifted = |sign: f64| {
                let mut p = point.clone();
                p[block].axpy(sign * FD_STEP, &dir);
                task.loss(&p)
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * FD_STEP);
            let analytic: f64 = grad.as_slice().iter().zip(dir.as_slice()).map(|(g, d)| g * d).sum();
            let floor = 1e-6 * loss.abs().max(1.0);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(floor);
            report.probes += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst_param = names[block].clone();
            }
        }
    }
    report
}

pub(crate) fn add_row(m: &DenseMatrix, row: &DenseMatrix) -> DenseMatrix {
    let bias = row.as_slice();
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + bias[j])
}

pub(crate) fn col_sums(m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

/// `weight * sum_i CE(softmax(logits_i), target_i)` and its gradient with
/// respect to the logits.
pub(crate) fn weighted_cross_entropy(logits: &DenseMatrix, targets: &[usize], weight: f64) -> (f64, DenseMatrix) {
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + total.ln();
        loss += log_z - row[t];
        for (j, &v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            grad.set(i, j, weight * (p - if j == t { 1.0 } else { 0.0 }));
        }
    }
    (weight * loss, grad)
}

/// Mean cross-entropy over rows.
pub(crate) fn softmax_cross_entropy(logits: &DenseMatrix, targets: &[usize]) -> (f64, DenseMatrix) {
    weighted_cross_entropy(logits, targets, 1.0 / targets.len() as f64)
}
