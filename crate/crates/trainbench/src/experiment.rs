//! Training runs and optimizer sweeps.

use crate::noise::{NoiseError, NoiseInjector};
use crate::runlog::{RunLog, StepRecord, DIVERGENCE_LIMIT};
use crate::tasks::{SyntheticTask, TaskError, TaskSpec};
use rootopt::optimizers::{OptimError, Optimizer, OptimizerConfig, StepReport};
use rootopt::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::io;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Optimizer(#[from] OptimError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    /// gradients and parameters are rounded to f32 after every step
    F32,
}

impl Precision {
    fn round(self, ms: &mut [DenseMatrix]) {
        if self == Precision::F32 {
            for m in ms {
                for v in m.as_mut_slice() {
                    *v = *v as f32 as f64;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub steps: u64,
    pub precision: Precision,
}

impl RunOptions {
    pub fn steps(steps: u64) -> Self {
        Self {
            steps,
            precision: Precision::F64,
        }
    }
}

/// A finished run with its final parameters.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    pub params: Vec<DenseMatrix>,
}

pub fn run_experiment(
    task: &SyntheticTask,
    optimizer: &OptimizerConfig,
    noise: &NoiseInjector,
    steps: u64,
) -> Result<RunLog, BenchError> {
    run_with_options(task, optimizer, noise, &RunOptions::steps(steps)).map(|r| r.log)
}

/// What an observer sees after each optimizer step.
pub struct StepView<'a> {
    pub step: u64,
    pub loss: f64,
    /// gradients as handed to the optimizer, after injection
    pub grads: &'a [DenseMatrix],
    pub report: &'a StepReport,
    pub param_names: &'a [String],
}

/// Trains from the task's initial parameters.
///
/// Each step evaluates loss and gradient, injects noise into the gradient and
/// hands it to the optimizer. A loss at or above [`DIVERGENCE_LIMIT`] (or a
/// non-finite loss or gradient) ends the run early and is recorded in the
/// summary rather than returned as an error.
pub fn run_with_options(
    task: &SyntheticTask,
    optimizer: &OptimizerConfig,
    noise: &NoiseInjector,
    options: &RunOptions,
) -> Result<RunResult, BenchError> {
    run_observed(task, optimizer, noise, options, |_| {})
}

/// [`run_with_options`] with a callback after every completed step.
pub fn run_observed(
    task: &SyntheticTask,
    optimizer: &OptimizerConfig,
    noise: &NoiseInjector,
    options: &RunOptions,
    mut observer: impl FnMut(&StepView),
) -> Result<RunResult, BenchError> {
    if options.steps == 0 {
        return Err(BenchError::Invalid("step count must be at least 1".into()));
    }
    noise.validate()?;
    let specs = task.param_specs();
    let param_names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let mut opt = Optimizer::new(optimizer.clone(), specs)?;
    let mut stream = noise.stream(task.spec().seed);
    let mut params = task.initial_params();
    options.precision.round(&mut params);
    let mut log = RunLog::new();
    let mut diverged_at = None;

    for step in 1..=options.steps {
        let (loss, mut grads) = task.loss_and_grad(&params);
        if !(loss.is_finite() && loss < DIVERGENCE_LIMIT) {
            diverged_at = Some(step);
            break;
        }
        let spiked = stream.inject(&mut grads);
        options.precision.round(&mut grads);
        let grad_norm = grads.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        let report = match opt.step(&mut params, &grads) {
            Ok(report) => Some(report),
            Err(OptimError::NonFiniteGradient(_)) => None,
            Err(e) => return Err(e.into()),
        };
        options.precision.round(&mut params);
        if let Some(report) = &report {
            observer(&StepView {
                step,
                loss,
                grads: &grads,
                report,
                param_names: &param_names,
            });
        }
        log.push(StepRecord {
            step,
            loss,
            grad_norm,
            epsilon: report.as_ref().and_then(|r| r.mean_epsilon()),
            outlier_frac: report.as_ref().and_then(|r| r.mean_outlier_fraction()),
            spiked,
        });
        if report.is_none() {
            diverged_at = Some(step);
            break;
        }
    }

    let final_loss = task.loss(&params);
    if diverged_at.is_none() && !(final_loss.is_finite() && final_loss < DIVERGENCE_LIMIT) {
        diverged_at = Some(options.steps);
    }
    log.finish(final_loss, diverged_at);
    Ok(RunResult { log, params })
}

/// An optimizer configuration with the label it is reported under.
#[derive(Debug, Clone)]
pub struct NamedConfig {
    pub label: String,
    pub config: OptimizerConfig,
}

impl NamedConfig {
    pub fn new(label: impl Into<String>, config: OptimizerConfig) -> Self {
        Self {
            label: label.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: String,
    pub optimizer: String,
    pub seed: u64,
    pub final_loss: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub label: String,
    /// mean final loss over runs that did not diverge
    pub mean_final_loss: f64,
    pub diverged_runs: usize,
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<ConfigSummary>,
}

impl Comparison {
    pub fn wins(&self, label: &str) -> Option<usize> {
        self.summaries.iter().find(|s| s.label == label).map(|s| s.wins)
    }

    pub fn summary(&self, label: &str) -> Option<&ConfigSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    /// Final loss of `label` under `seed`.
    pub fn final_loss(&self, label: &str, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.optimizer == label && r.seed == seed)
            .map(|r| r.final_loss)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        write_comparison_rows(&self.rows, out)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ComparisonRow>, csv::Error> {
        csv::Reader::from_reader(input).deserialize().collect()
    }

    /// Rebuilds per-config summaries from rows, e.g. ones read back from CSV.
    pub fn from_rows(rows: Vec<ComparisonRow>) -> Self {
        let mut labels: Vec<String> = Vec::new();
        let mut seeds: Vec<u64> = Vec::new();
        for r in &rows {
            if !labels.contains(&r.optimizer) {
                labels.push(r.optimizer.clone());
            }
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        let mut wins = vec![0usize; labels.len()];
        for seed in &seeds {
            let best = labels
                .iter()
                .enumerate()
                .filter_map(|(i, label)| {
                    rows.iter()
                        .find(|r| &r.optimizer == label && r.seed == *seed && !r.diverged)
                        .map(|r| (i, r.final_loss))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, _)) = best {
                wins[i] += 1;
            }
        }
        let summaries = labels
            .iter()
            .zip(wins)
            .map(|(label, wins)| {
                let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| &r.optimizer == label).collect();
                let ok: Vec<f64> = mine.iter().filter(|r| !r.diverged).map(|r| r.final_loss).collect();
                let mean_final_loss = if ok.is_empty() {
                    f64::INFINITY
                } else {
                    ok.iter().sum::<f64>() / ok.len() as f64
                };
                ConfigSummary {
                    label: label.clone(),
                    mean_final_loss,
                    diverged_runs: mine.len() - ok.len(),
                    wins,
                }
            })
            .collect();
        Self { rows, summaries }
    }
}

pub fn write_comparison_rows<W: io::Write>(rows: &[ComparisonRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["task", "optimizer", "seed", "final_loss", "diverged"])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every config on every seed.
///
/// The seed sets the task data, the initial point and the noise stream. Runs
/// for different seeds execute on separate threads; results are ordered by
/// seed, then config. A seed's win goes to the lowest non-diverged final loss,
/// with ties resolved in config order.
pub fn compare_optimizers(
    task: &TaskSpec,
    configs: &[NamedConfig],
    noise: &NoiseInjector,
    seeds: &[u64],
    steps: u64,
) -> Result<Comparison, BenchError> {
    if configs.is_empty() {
        return Err(BenchError::Invalid("no optimizer configs".into()));
    }
    if seeds.is_empty() {
        return Err(BenchError::Invalid("no seeds".into()));
    }
    noise.validate()?;
    let task_name = task.kind().name();
    let per_seed: Vec<Result<Vec<ComparisonRow>, BenchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let t = SyntheticTask::new(task.with_seed(seed))?;
                    configs
                        .iter()
                        .map(|c| {
                            let log = run_experiment(&t, &c.config, noise, steps)?;
                            let summary = log.summary().expect("finished run");
                            Ok(ComparisonRow {
                                task: task_name.to_string(),
                                optimizer: c.label.clone(),
                                seed,
                                final_loss: summary.final_loss,
                                diverged: summary.diverged,
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut rows = Vec::with_capacity(seeds.len() * configs.len());
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(Comparison::from_rows(rows))
}
