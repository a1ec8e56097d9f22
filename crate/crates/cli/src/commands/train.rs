use super::{markdown_table, sci};
use crate::config::TrainConfig;
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use crate::svg::{line_chart, Series};
use rootopt::optimizers::OptimizerKind;
use rootopt_bench::{run_observed, RunLog, RunOptions, SyntheticTask};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const RUNLOG_FILE: &str = "runlog.csv";
pub const ROBUSTIFY_FILE: &str = "robustify.csv";
pub const MOMENTUM_DIR: &str = "momentum";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustifyRow {
    pub step: u64,
    pub param_name: String,
    pub epsilon: f64,
    pub outlier_fraction: f64,
    pub outlier_mass_ratio: f64,
}

pub fn loss_chart(title: &str, logs: &[(String, &RunLog)]) -> String {
    let series: Vec<Series> = logs
        .iter()
        .map(|(label, log)| Series {
            label: label.clone(),
            points: log.records().iter().map(|r| (r.step as f64, r.loss)).collect(),
        })
        .collect();
    line_chart(title, "step", "loss (log scale)", &series, true)
}

pub fn run(cfg: &TrainConfig, out: &OutDir) -> CliResult<()> {
    let task = SyntheticTask::new(cfg.task.clone()).map_err(CliError::config)?;
    cfg.noise.validate().map_err(CliError::config)?;
    if cfg.steps == 0 {
        return Err(CliError::config("steps must be at least 1"));
    }
    let mut opt = cfg.optimizer.build(cfg.steps)?;
    if let Some(capture) = &cfg.capture {
        opt = opt.with_capture(capture.build(&out.join(MOMENTUM_DIR))?);
    }
    let is_root = opt.kind == OptimizerKind::Root;
    let options = RunOptions {
        steps: cfg.steps,
        precision: cfg.precision,
    };

    let mut robust = Vec::new();
    let mut dumps = 0;
    let result = run_observed(&task, &opt, &cfg.noise, &options, |view| {
        dumps += view.report.captured;
        for (name, o) in view.param_names.iter().zip(&view.report.outcomes) {
            if let (Some(epsilon), Some(outlier_fraction), Some(outlier_mass_ratio)) =
                (o.epsilon, o.outlier_fraction, o.outlier_mass_ratio)
            {
                robust.push(RobustifyRow {
                    step: view.step,
                    param_name: name.clone(),
                    epsilon,
                    outlier_fraction,
                    outlier_mass_ratio,
                });
            }
        }
    })
    .map_err(|e| CliError::config(format!("run setup failed: {e}")))?;

    let log = &result.log;
    log.write_csv(std::fs::File::create(out.join(RUNLOG_FILE))?)?;
    if is_root {
        let mut w = csv::Writer::from_path(out.join(ROBUSTIFY_FILE))?;
        for r in &robust {
            w.serialize(r)?;
        }
        if robust.is_empty() {
            w.write_record(["step", "param_name", "epsilon", "outlier_fraction", "outlier_mass_ratio"])?;
        }
        w.flush()?;
    }
    let label = cfg.optimizer.label();
    if cfg.plot {
        out.write("loss.svg", loss_chart(&format!("{} on {}", label, task.kind().name()), &[(label.clone(), log)]))?;
    }

    let s = log.summary().expect("finished run");
    let mut md = String::from("# Training run\n\n");
    let _ = writeln!(
        md,
        "{} on {} (seed {}), {} steps requested.\n",
        label,
        task.kind().name(),
        cfg.task.seed,
        cfg.steps
    );
    let mut rows = vec![
        vec!["final loss".into(), sci(s.final_loss)],
        vec!["min loss".into(), sci(s.min_loss)],
        vec!["steps run".into(), s.steps_run.to_string()],
        vec!["diverged".into(), s.diverged.to_string()],
        vec!["steps with spikes".into(), s.spike_steps.len().to_string()],
    ];
    if cfg.capture.is_some() {
        rows.push(vec!["momentum dumps".into(), dumps.to_string()]);
    }
    if is_root && !robust.is_empty() {
        let n = robust.len() as f64;
        rows.push(vec!["mean epsilon".into(), sci(robust.iter().map(|r| r.epsilon).sum::<f64>() / n)]);
        rows.push(vec![
            "mean outlier fraction".into(),
            sci(robust.iter().map(|r| r.outlier_fraction).sum::<f64>() / n),
        ]);
    }
    md.push_str(&markdown_table(&["metric", "value"], &rows));
    out.write("summary.md", md)?;
    Ok(())
}

pub fn read_robustify(text: &str) -> Result<Vec<RobustifyRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
