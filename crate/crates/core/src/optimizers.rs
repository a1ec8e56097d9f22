//! SGD with momentum, AdamW, Muon and ROOT behind one stepping interface.
//!
//! Matrix-shaped weights go through the orthogonalizing rules (Muon, ROOT);
//! biases, norms, embeddings and class tokens are routed to AdamW. All four
//! heavy-ball variants share the accumulation `M_t = mu M_{t-1} + G_t`.

use crate::matrix::{write_dump, DenseMatrix, DumpDtype, MatrixError};
use crate::orthogonalize::{ns_orthogonalize, CoefficientTable, NsCoefficients, OrthError};
use crate::robustify::{decompose, PolicyError, ThresholdPolicy};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("parameter {index} ({name}): shape mismatch {param:?} vs gradient {grad:?}")]
    ShapeMismatch {
        index: usize,
        name: String,
        param: (usize, usize),
        grad: (usize, usize),
    },
    #[error("expected {expected} tensors, got {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("parameter {0} has no role metadata")]
    UnroutableParameter(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("momentum capture failed: {0}")]
    IoFailure(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    SgdMomentum,
    AdamW,
    Muon,
    Root,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum => "sgdm",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Muon => "muon",
            OptimizerKind::Root => "root",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgdm" | "sgd" | "sgd-momentum" | "sgd_momentum" => Some(OptimizerKind::SgdMomentum),
            "adamw" | "adam" => Some(OptimizerKind::AdamW),
            "muon" => Some(OptimizerKind::Muon),
            "root" => Some(OptimizerKind::Root),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
    Norm,
    Embedding,
    ClassToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    /// logical dimensions; 1-D parameters are stored as `1 x n` matrices
    pub dims: Vec<usize>,
    pub role: Option<ParamRole>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, dims: &[usize], role: ParamRole) -> Self {
        Self {
            name: name.into(),
            dims: dims.to_vec(),
            role: Some(role),
        }
    }

    /// `(rows, cols)` of the backing matrix.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, rest @ ..] => (*r, rest.iter().product()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// orthogonalized update (Muon / ROOT)
    Matrix,
    /// elementwise update (AdamW)
    Elementwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub route: Route,
    /// indices into the parameter list
    pub members: Vec<usize>,
}

pub fn route_of(spec: &ParamSpec) -> Result<Route, OptimError> {
    match spec.role {
        None => Err(OptimError::UnroutableParameter(spec.name.clone())),
        Some(ParamRole::Weight) if spec.dims.len() >= 2 => Ok(Route::Matrix),
        Some(_) => Ok(Route::Elementwise),
    }
}

/// Splits parameters into a matrix group and an elementwise group (empty groups omitted).
pub fn route_params(specs: &[ParamSpec]) -> Result<Vec<ParamGroup>, OptimError> {
    let mut matrix = Vec::new();
    let mut elementwise = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        match route_of(spec)? {
            Route::Matrix => matrix.push(i),
            Route::Elementwise => elementwise.push(i),
        }
    }
    let mut groups = Vec::new();
    if !matrix.is_empty() {
        groups.push(ParamGroup {
            name: "matrix".into(),
            route: Route::Matrix,
            members: matrix,
        });
    }
    if !elementwise.is_empty() {
        groups.push(ParamGroup {
            name: "elementwise".into(),
            route: Route::Elementwise,
            members: elementwise,
        });
    }
    Ok(groups)
}

/// Learning-rate multiplier over training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Linear warmup to the peak, then cosine decay to `final_fraction` of it at `total_steps`.
    Cosine {
        warmup_steps: u64,
        total_steps: u64,
        final_fraction: f64,
    },
}

impl Schedule {
    pub fn cosine(warmup_steps: u64, total_steps: u64) -> Self {
        Schedule::Cosine {
            warmup_steps,
            total_steps,
            final_fraction: 0.1,
        }
    }

    /// Multiplier for 1-based step `t`.
    pub fn factor(&self, t: u64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine {
                warmup_steps,
                total_steps,
                final_fraction,
            } => {
                if t <= warmup_steps {
                    return t as f64 / warmup_steps.max(1) as f64;
                }
                let span = total_steps.saturating_sub(warmup_steps).max(1) as f64;
                let progress = ((t - warmup_steps) as f64 / span).min(1.0);
                let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                final_fraction + (1.0 - final_fraction) * cosine
            }
        }
    }
}

/// Scale `s` applied to orthogonalized updates: `factor * sqrt(max(rows, cols))`,
/// or just `factor` when dimension scaling is off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsScale {
    pub factor: f64,
    pub scale_by_dim: bool,
}

impl Default for RmsScale {
    fn default() -> Self {
        Self {
            factor: 0.2,
            scale_by_dim: true,
        }
    }
}

impl RmsScale {
    pub const UNIT: RmsScale = RmsScale {
        factor: 1.0,
        scale_by_dim: false,
    };

    pub fn for_shape(&self, rows: usize, cols: usize) -> f64 {
        if self.scale_by_dim {
            self.factor * (rows.max(cols) as f64).sqrt()
        } else {
            self.factor
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// decoupled decay for AdamW-updated parameters
    pub weight_decay: f64,
    /// decoupled decay for Muon/ROOT matrices; zero reproduces the plain algorithms
    pub matrix_weight_decay: f64,
    /// AdamW learning rate for elementwise parameters under Muon/ROOT (defaults to `lr`)
    pub elementwise_lr: Option<f64>,
    pub threshold: ThresholdPolicy,
    pub rms: RmsScale,
    pub schedule: Schedule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr: 0.02,
            momentum: 0.95,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            matrix_weight_decay: 0.0,
            elementwise_lr: None,
            threshold: ThresholdPolicy::default(),
            rms: RmsScale::default(),
            schedule: Schedule::Constant,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidHyper(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam epsilon must be positive".into());
        }
        if self.weight_decay < 0.0 || self.matrix_weight_decay < 0.0 {
            return bad("weight decay must be non-negative".into());
        }
        if let Some(lr) = self.elementwise_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return bad("elementwise learning rate must be positive".into());
            }
        }
        self.threshold.validate()?;
        Ok(())
    }
}

/// Per-parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub momentum: DenseMatrix,
    /// AdamW second moment
    pub second_moment: Option<DenseMatrix>,
    /// AdamW step counter for bias correction
    pub adam_steps: u64,
}

impl ParamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            momentum: DenseMatrix::zeros(rows, cols),
            second_moment: None,
            adam_steps: 0,
        }
    }
}

/// What happened to one parameter in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    /// false when the orthogonalized update was skipped for a degenerate input
    pub applied: bool,
    pub epsilon: Option<f64>,
    pub outlier_fraction: Option<f64>,
    pub outlier_mass_ratio: Option<f64>,
}

impl StepOutcome {
    fn applied() -> Self {
        Self {
            applied: true,
            ..Default::default()
        }
    }
}

fn accumulate(state: &mut ParamState, grad: &DenseMatrix, mu: f64) {
    for (m, &g) in state.momentum.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *m = mu * *m + g;
    }
}

/// `M = mu M + G; theta -= lr M`
pub fn sgdm_step(state: &mut ParamState, hp: &Hyperparams, lr: f64, param: &mut DenseMatrix, grad: &DenseMatrix) -> StepOutcome {
    accumulate(state, grad, hp.momentum);
    param.axpy(-lr, &state.momentum);
    StepOutcome::applied()
}

/// Adam with decoupled weight decay and bias correction.
pub fn adamw_step(
    state: &mut ParamState,
    hp: &Hyperparams,
    lr: f64,
    param: &mut DenseMatrix,
    grad: &DenseMatrix,
) -> StepOutcome {
    let (rows, cols) = param.shape();
    let v = state
        .second_moment
        .get_or_insert_with(|| DenseMatrix::zeros(rows, cols));
    state.adam_steps += 1;
    let t = state.adam_steps as i32;
    let bias1 = 1.0 - hp.beta1.powi(t);
    let bias2 = 1.0 - hp.beta2.powi(t);
    let decay = 1.0 - lr * hp.weight_decay;
    let m = state.momentum.as_mut_slice();
    let v = v.as_mut_slice();
    for (((p, &g), m), v) in param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p = *p * decay - lr * m_hat / (v_hat.sqrt() + hp.adam_eps);
    }
    StepOutcome::applied()
}

fn apply_orthogonal_update(hp: &Hyperparams, lr: f64, param: &mut DenseMatrix, update: &DenseMatrix) {
    if hp.matrix_weight_decay > 0.0 {
        param.scale_in_place(1.0 - lr * hp.matrix_weight_decay);
    }
    let s = hp.rms.for_shape(param.rows(), param.cols());
    param.axpy(-lr * s, update);
}

/// Heavy-ball momentum, Newton-Schulz with `coeffs`, scaled step.
pub fn muon_step(
    state: &mut ParamState,
    hp: &Hyperparams,
    lr: f64,
    coeffs: &NsCoefficients,
    param: &mut DenseMatrix,
    grad: &DenseMatrix,
) -> StepOutcome {
    accumulate(state, grad, hp.momentum);
    match ns_orthogonalize(&state.momentum, coeffs) {
        Ok(update) => {
            apply_orthogonal_update(hp, lr, param, &update);
            StepOutcome::applied()
        }
        Err(OrthError::DegenerateInput { .. }) => StepOutcome::default(),
        Err(e) => unreachable!("validated coefficients: {e}"),
    }
}

/// Heavy-ball momentum, soft-threshold split, shape-adaptive Newton-Schulz on the
/// clipped base, scaled step. The momentum buffer keeps the full `M_t`.
pub fn root_step(
    state: &mut ParamState,
    hp: &Hyperparams,
    lr: f64,
    table: &CoefficientTable,
    param: &mut DenseMatrix,
    grad: &DenseMatrix,
) -> StepOutcome {
    accumulate(state, grad, hp.momentum);
    let parts = decompose(&state.momentum, &hp.threshold);
    let mut outcome = StepOutcome {
        applied: false,
        epsilon: Some(parts.epsilon_used),
        outlier_fraction: Some(parts.outlier_fraction()),
        outlier_mass_ratio: Some(parts.outlier_mass_ratio()),
    };
    let coeffs = table.lookup(param.rows(), param.cols());
    match ns_orthogonalize(&parts.base, coeffs) {
        Ok(update) => {
            apply_orthogonal_update(hp, lr, param, &update);
            outcome.applied = true;
        }
        Err(OrthError::DegenerateInput { .. }) => {}
        Err(e) => unreachable!("validated coefficients: {e}"),
    }
    outcome
}

/// Writes momentum matrices to `{run_dir}/{param}/{step}.mtx` every `stride` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumCapture {
    pub run_dir: PathBuf,
    pub stride: u64,
    pub dtype: DumpDtype,
}

impl MomentumCapture {
    pub fn new(run_dir: impl Into<PathBuf>, stride: u64) -> Self {
        Self {
            run_dir: run_dir.into(),
            stride: stride.max(1),
            dtype: DumpDtype::F64,
        }
    }

    pub fn path_for(&self, param_name: &str, step: u64) -> PathBuf {
        let safe: String = param_name
            .chars()
            .map(|c| if c == '/' || c == '\\' { '_' } else { c })
            .collect();
        self.run_dir.join(safe).join(format!("{step}.mtx"))
    }

    /// Dumps `momentum` if `step` is on the stride; returns whether a file was written.
    pub fn capture_momentum(&self, param_name: &str, step: u64, momentum: &DenseMatrix) -> Result<bool, OptimError> {
        if !step.is_multiple_of(self.stride) {
            return Ok(false);
        }
        write_dump(self.path_for(param_name, step), momentum, self.dtype)?;
        Ok(true)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub hyper: Hyperparams,
    /// shape-specific coefficients for ROOT; Muon always uses the fixed Muon triple
    pub table: Arc<CoefficientTable>,
    pub capture: Option<MomentumCapture>,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, hyper: Hyperparams) -> Self {
        Self {
            kind,
            hyper,
            table: Arc::new(CoefficientTable::muon_default()),
            capture: None,
        }
    }

    pub fn with_table(mut self, table: Arc<CoefficientTable>) -> Self {
        self.table = table;
        self
    }

    pub fn with_capture(mut self, capture: MomentumCapture) -> Self {
        self.capture = Some(capture);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub outcomes: Vec<StepOutcome>,
    pub captured: usize,
}

impl StepReport {
    /// Mean threshold over parameters that reported one.
    pub fn mean_epsilon(&self) -> Option<f64> {
        mean(self.outcomes.iter().filter_map(|o| o.epsilon))
    }

    pub fn mean_outlier_fraction(&self) -> Option<f64> {
        mean(self.outcomes.iter().filter_map(|o| o.outlier_fraction))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = it.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

/// One optimizer over a fixed list of parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    specs: Vec<ParamSpec>,
    routes: Vec<Route>,
    states: Vec<ParamState>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, specs: Vec<ParamSpec>) -> Result<Self, OptimError> {
        config.hyper.validate()?;
        let routes = specs.iter().map(route_of).collect::<Result<Vec<_>, _>>()?;
        let states = specs
            .iter()
            .map(|s| {
                let (r, c) = s.matrix_shape();
                ParamState::new(r, c)
            })
            .collect();
        Ok(Self {
            config,
            specs,
            routes,
            states,
            step: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.config.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn states(&self) -> &[ParamState] {
        &self.states
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Advances every parameter by one step.
    pub fn step(&mut self, params: &mut [DenseMatrix], grads: &[DenseMatrix]) -> Result<StepReport, OptimError> {
        self.check(params, grads)?;
        self.step += 1;
        let t = self.step;
        let hp = &self.config.hyper;
        let factor = hp.schedule.factor(t);
        let lr = hp.lr * factor;
        let elementwise_lr = hp.elementwise_lr.unwrap_or(hp.lr) * factor;

        let mut outcomes = Vec::with_capacity(params.len());
        let mut captured = 0;
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let state = &mut self.states[i];
            let outcome = match (self.config.kind, self.routes[i]) {
                (OptimizerKind::SgdMomentum, _) => sgdm_step(state, hp, lr, param, grad),
                (OptimizerKind::AdamW, _) => adamw_step(state, hp, lr, param, grad),
                (OptimizerKind::Muon | OptimizerKind::Root, Route::Elementwise) => {
                    adamw_step(state, hp, elementwise_lr, param, grad)
                }
                (OptimizerKind::Muon, Route::Matrix) => {
                    let out = muon_step(state, hp, lr, &NsCoefficients::MUON, param, grad);
                    captured += self.capture(i, t)?;
                    out
                }
                (OptimizerKind::Root, Route::Matrix) => {
                    let out = root_step(state, hp, lr, &self.config.table, param, grad);
                    captured += self.capture(i, t)?;
                    out
                }
            };
            outcomes.push(outcome);
        }
        Ok(StepReport {
            step: t,
            lr,
            outcomes,
            captured,
        })
    }

    fn capture(&self, index: usize, step: u64) -> Result<usize, OptimError> {
        match &self.config.capture {
            Some(cap) => Ok(cap.capture_momentum(&self.specs[index].name, step, &self.states[index].momentum)? as usize),
            None => Ok(0),
        }
    }

    fn check(&self, params: &[DenseMatrix], grads: &[DenseMatrix]) -> Result<(), OptimError> {
        for found in [params.len(), grads.len()] {
            if found != self.specs.len() {
                return Err(OptimError::CountMismatch {
                    expected: self.specs.len(),
                    found,
                });
            }
        }
        for (i, ((p, g), spec)) in params.iter().zip(grads).zip(&self.specs).enumerate() {
            if p.shape() != g.shape() || p.shape() != spec.matrix_shape() {
                return Err(OptimError::ShapeMismatch {
                    index: i,
                    name: spec.name.clone(),
                    param: p.shape(),
                    grad: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(OptimError::NonFiniteGradient(spec.name.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustify::decompose_with;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_hp(momentum: f64) -> Hyperparams {
        Hyperparams {
            lr: 0.1,
            momentum,
            rms: RmsScale::UNIT,
            ..Default::default()
        }
    }

    fn weight(name: &str, r: usize, c: usize) -> ParamSpec {
        ParamSpec::new(name, &[r, c], ParamRole::Weight)
    }

    #[test]
    fn routing_rules() {
        let specs = vec![
            weight("mlp.w", 128, 64),
            ParamSpec::new("mlp.b", &[128], ParamRole::Bias),
            ParamSpec::new("embed", &[1000, 64], ParamRole::Embedding),
            ParamSpec::new("ln.g", &[64], ParamRole::Norm),
            ParamSpec::new("cls", &[1, 64], ParamRole::ClassToken),
        ];
        let groups = route_params(&specs).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].route, Route::Matrix);
        assert_eq!(groups[0].members, vec![0]);
        assert_eq!(groups[1].members, vec![1, 2, 3, 4]);

        let missing = ParamSpec {
            name: "mystery".into(),
            dims: vec![4, 4],
            role: None,
        };
        assert!(matches!(
            route_params(&[missing]),
            Err(OptimError::UnroutableParameter(_))
        ));
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let p0 = DenseMatrix::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]);
        for kind in [OptimizerKind::SgdMomentum, OptimizerKind::AdamW, OptimizerKind::Muon, OptimizerKind::Root] {
            let mut opt = Optimizer::new(OptimizerConfig::new(kind, unit_hp(0.9)), vec![weight("w", 2, 2)]).unwrap();
            let mut params = vec![p0.clone()];
            for _ in 0..3 {
                opt.step(&mut params, &[DenseMatrix::zeros(2, 2)]).unwrap();
            }
            assert_eq!(params[0], p0, "{kind:?}");
        }
    }

    #[test]
    fn sgdm_plain_step() {
        let mut state = ParamState::new(1, 2);
        let mut p = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        let g = DenseMatrix::from_rows(&[&[2.0, -4.0]]);
        sgdm_step(&mut state, &unit_hp(0.0), 0.1, &mut p, &g);
        assert!(p.approx_eq(&DenseMatrix::from_rows(&[&[0.8, 1.4]]), 1e-15));
    }

    #[test]
    fn muon_single_step_matches_orthogonalized_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DenseMatrix::random_gaussian(5, 3, &mut rng);
        let p0 = DenseMatrix::random_gaussian(5, 3, &mut rng);
        let mut p = p0.clone();
        let hp = Hyperparams {
            rms: RmsScale::default(),
            ..unit_hp(0.0)
        };
        muon_step(&mut ParamState::new(5, 3), &hp, 0.1, &NsCoefficients::MUON, &mut p, &g);
        let s = 0.2 * 5f64.sqrt();
        let expected = p0.sub(&ns_orthogonalize(&g, &NsCoefficients::MUON).unwrap().scale(0.1 * s));
        assert!(p.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn momentum_accumulates_geometrically() {
        let g = DenseMatrix::from_rows(&[&[1.0, 2.0], &[-1.0, 0.5]]);
        let mut state = ParamState::new(2, 2);
        let mut p = DenseMatrix::zeros(2, 2);
        let hp = unit_hp(0.95);
        for _ in 0..2 {
            muon_step(&mut state, &hp, 0.1, &NsCoefficients::MUON, &mut p, &g);
        }
        assert!(state.momentum.approx_eq(&g.scale(1.95), 1e-15));
    }

    #[test]
    fn momentum_buffers_agree_across_heavy_ball_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grads: Vec<DenseMatrix> = (0..6).map(|_| DenseMatrix::random_gaussian(4, 3, &mut rng)).collect();
        let hp = unit_hp(0.9);
        let (mut s_sgd, mut s_muon, mut s_root) = (ParamState::new(4, 3), ParamState::new(4, 3), ParamState::new(4, 3));
        let (mut p1, mut p2, mut p3) = (DenseMatrix::zeros(4, 3), DenseMatrix::zeros(4, 3), DenseMatrix::zeros(4, 3));
        let table = CoefficientTable::muon_default();
        for g in &grads {
            sgdm_step(&mut s_sgd, &hp, 0.1, &mut p1, g);
            muon_step(&mut s_muon, &hp, 0.1, &NsCoefficients::MUON, &mut p2, g);
            root_step(&mut s_root, &hp, 0.1, &table, &mut p3, g);
        }
        assert_eq!(s_sgd.momentum, s_muon.momentum);
        assert_eq!(s_sgd.momentum, s_root.momentum);
    }

    #[test]
    fn adamw_first_step_with_zero_betas() {
        let hp = Hyperparams {
            beta1: 0.0,
            beta2: 0.0,
            ..unit_hp(0.0)
        };
        let g = DenseMatrix::from_rows(&[&[0.3, -2.0, 1e-3]]);
        let mut p = DenseMatrix::zeros(1, 3);
        adamw_step(&mut ParamState::new(1, 3), &hp, 0.01, &mut p, &g);
        for (pv, gv) in p.as_slice().iter().zip(g.as_slice()) {
            let expected = -0.01 * gv / (gv.abs() + hp.adam_eps);
            assert!((pv - expected).abs() < 1e-15);
            assert!((pv.abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn adamw_decay_only() {
        let hp = Hyperparams {
            weight_decay: 0.1,
            ..unit_hp(0.0)
        };
        let p0 = DenseMatrix::from_rows(&[&[2.0, -4.0]]);
        let mut p = p0.clone();
        adamw_step(&mut ParamState::new(1, 2), &hp, 0.5, &mut p, &DenseMatrix::zeros(1, 2));
        assert!(p.approx_eq(&p0.scale(1.0 - 0.05), 1e-15));
    }

    #[test]
    fn root_with_full_quantile_equals_muon() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let hp = Hyperparams {
            threshold: ThresholdPolicy::Quantile(1.0),
            ..Default::default()
        };
        let specs = vec![weight("w", 6, 4), ParamSpec::new("b", &[4], ParamRole::Bias)];
        let mut muon = Optimizer::new(OptimizerConfig::new(OptimizerKind::Muon, hp.clone()), specs.clone()).unwrap();
        let mut root = Optimizer::new(OptimizerConfig::new(OptimizerKind::Root, hp), specs).unwrap();
        let init = vec![DenseMatrix::random_gaussian(6, 4, &mut rng), DenseMatrix::random_gaussian(1, 4, &mut rng)];
        let (mut pm, mut pr) = (init.clone(), init);
        for _ in 0..25 {
            let grads = vec![DenseMatrix::random_gaussian(6, 4, &mut rng), DenseMatrix::random_gaussian(1, 4, &mut rng)];
            muon.step(&mut pm, &grads).unwrap();
            root.step(&mut pr, &grads).unwrap();
            assert_eq!(pm, pr);
        }
    }

    #[test]
    fn root_zero_threshold_skips() {
        let hp = Hyperparams {
            threshold: ThresholdPolicy::FixedEpsilon(0.0),
            ..unit_hp(0.0)
        };
        let p0 = DenseMatrix::identity(3);
        let mut p = p0.clone();
        let out = root_step(
            &mut ParamState::new(3, 3),
            &hp,
            0.1,
            &CoefficientTable::muon_default(),
            &mut p,
            &DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64),
        );
        assert!(!out.applied);
        assert_eq!(out.epsilon, Some(0.0));
        assert_eq!(p, p0);
    }

    #[test]
    fn root_spike_is_clamped_before_orthogonalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut g = DenseMatrix::random_gaussian(8, 6, &mut rng);
        g.set(3, 2, 100.0 * g.max_abs());
        let hp = Hyperparams {
            threshold: ThresholdPolicy::Quantile(0.9),
            ..unit_hp(0.0)
        };
        let mut p = DenseMatrix::zeros(8, 6);
        let out = root_step(&mut ParamState::new(8, 6), &hp, 1.0, &CoefficientTable::muon_default(), &mut p, &g);
        let eps = out.epsilon.unwrap();
        let parts = decompose_with(&g, eps);
        assert!(parts.base.max_abs() <= eps);
        let expected = ns_orthogonalize(&parts.base, &NsCoefficients::MUON).unwrap().scale(-1.0);
        assert!(p.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn step_validation() {
        let mut opt = Optimizer::new(
            OptimizerConfig::new(OptimizerKind::Muon, Hyperparams::default()),
            vec![weight("w", 2, 3)],
        )
        .unwrap();
        let mut params = vec![DenseMatrix::zeros(2, 3)];
        assert!(matches!(
            opt.step(&mut params, &[DenseMatrix::zeros(3, 2)]),
            Err(OptimError::ShapeMismatch { .. })
        ));
        let mut bad = DenseMatrix::zeros(2, 3);
        bad.set(0, 0, f64::NAN);
        assert!(matches!(opt.step(&mut params, &[bad]), Err(OptimError::NonFiniteGradient(_))));
        assert!(matches!(opt.step(&mut params, &[]), Err(OptimError::CountMismatch { .. })));

        let bad_hp = Hyperparams {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(Optimizer::new(OptimizerConfig::new(OptimizerKind::Muon, bad_hp), vec![]).is_err());
    }

    #[test]
    fn cosine_schedule_shape() {
        let s = Schedule::cosine(10, 110);
        assert_eq!(s.factor(5), 0.5);
        assert_eq!(s.factor(10), 1.0);
        assert!((s.factor(60) - 0.55).abs() < 1e-12);
        assert!((s.factor(110) - 0.1).abs() < 1e-12);
        assert!((s.factor(500) - 0.1).abs() < 1e-12);
        assert_eq!(Schedule::Constant.factor(123), 1.0);
    }

    #[test]
    fn capture_stride() {
        let dir = tempfile::tempdir().unwrap();
        let cap = MomentumCapture::new(dir.path(), 100);
        let hp = unit_hp(0.9);
        let cfg = OptimizerConfig::new(OptimizerKind::Muon, hp).with_capture(cap.clone());
        let mut opt = Optimizer::new(cfg, vec![weight("layer/w", 3, 2), ParamSpec::new("b", &[2], ParamRole::Bias)]).unwrap();
        let mut params = vec![DenseMatrix::zeros(3, 2), DenseMatrix::zeros(1, 2)];
        let grads = vec![DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.5), DenseMatrix::zeros(1, 2)];
        let mut total = 0;
        for _ in 0..300 {
            total += opt.step(&mut params, &grads).unwrap().captured;
        }
        assert_eq!(total, 3);
        let files: Vec<_> = std::fs::read_dir(dir.path().join("layer_w")).unwrap().collect();
        assert_eq!(files.len(), 3);
        let reloaded = crate::matrix::read_dump(cap.path_for("layer/w", 300)).unwrap();
        assert_eq!(reloaded, opt.states()[0].momentum);
    }
}
