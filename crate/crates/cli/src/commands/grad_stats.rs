use super::{load_dumps, markdown_table, sci};
use crate::config::{GradStatsConfig, ThresholdSpec};
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use rootopt::robustify::{decompose, ThresholdPolicy};
use rootopt::DenseMatrix;
use rootopt_bench::{gradient_stats, run_observed, DistributionReport, RunOptions, SyntheticTask};
use std::fmt::Write;

pub const STATS_FILE: &str = "grad_stats.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

/// `(metric, value)` pairs in the order they are written.
pub fn metrics(report: &DistributionReport, outlier_fraction: f64, outlier_mass_ratio: f64) -> Vec<(String, f64)> {
    let mut m = vec![
        ("n".to_string(), report.n as f64),
        ("mean".into(), report.mean),
        ("std".into(), report.std),
        ("excess_kurtosis".into(), report.excess_kurtosis),
    ];
    for (k, f) in &report.tail_fractions {
        m.push((format!("tail_fraction_{k}sigma"), *f));
    }
    m.push(("qq_deviation".into(), report.qq_deviation));
    m.push(("degenerate".into(), if report.degenerate { 1.0 } else { 0.0 }));
    m.push(("outlier_fraction".into(), outlier_fraction));
    m.push(("outlier_mass_ratio".into(), outlier_mass_ratio));
    m
}

fn live_gradients(cfg: &GradStatsConfig) -> CliResult<Vec<DenseMatrix>> {
    if cfg.steps == 0 || cfg.every == 0 {
        return Err(CliError::config("steps and every must be at least 1"));
    }
    let task = SyntheticTask::new(cfg.task.clone()).map_err(CliError::config)?;
    let opt = cfg.optimizer.build(cfg.steps)?;
    let mut grads = Vec::new();
    run_observed(&task, &opt, &cfg.noise, &RunOptions::steps(cfg.steps), |view| {
        if view.step % cfg.every == 0 {
            grads.extend(view.grads.iter().filter(|g| g.rows() > 1 && g.cols() > 1).cloned());
        }
    })
    .map_err(|e| CliError::config(format!("run setup failed: {e}")))?;
    Ok(grads)
}

pub fn run(cfg: &GradStatsConfig, out: &OutDir) -> CliResult<()> {
    let (source, matrices) = if cfg.dumps.is_empty() {
        (
            format!(
                "live matrix gradients of {} on {} (seed {}), every {} of {} steps",
                cfg.optimizer.label(),
                cfg.task.kind().name(),
                cfg.task.seed,
                cfg.every,
                cfg.steps
            ),
            live_gradients(cfg)?,
        )
    } else {
        let dumps = load_dumps(&cfg.dumps)?;
        (format!("{} dump files", dumps.len()), dumps.into_iter().map(|(_, m)| m).collect())
    };
    if matrices.is_empty() {
        return Err(CliError::config("no matrices to analyze"));
    }
    let policy = match cfg.optimizer.threshold {
        ThresholdSpec::Quantile(p) => ThresholdPolicy::Quantile(p),
        ThresholdSpec::FixedEpsilon(e) => ThresholdPolicy::FixedEpsilon(e),
    };
    policy.validate().map_err(CliError::config)?;
    let (mut frac, mut mass) = (0.0, 0.0);
    for m in &matrices {
        let d = decompose(m, &policy);
        frac += d.outlier_fraction();
        mass += d.outlier_mass_ratio();
    }
    let count = matrices.len() as f64;
    let report = gradient_stats(&matrices);
    let metrics = metrics(&report, frac / count, mass / count);

    let mut w = csv::Writer::from_path(out.join(STATS_FILE))?;
    w.write_record(["metric", "value"])?;
    for (k, v) in &metrics {
        w.write_record([k.clone(), v.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(HISTOGRAM_FILE))?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    let h = &report.histogram;
    let edges = h.bin_edges();
    w.write_record(["-inf".to_string(), h.lo.to_string(), h.below.to_string()])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([edges[i].to_string(), edges[i + 1].to_string(), c.to_string()])?;
    }
    w.write_record([h.hi.to_string(), "inf".to_string(), h.above.to_string()])?;
    w.flush()?;

    let mut md = String::from("# Gradient distribution\n\n");
    let _ = writeln!(md, "Pooled entries of {} matrices: {}.", matrices.len(), source);
    let _ = writeln!(md, "Histogram bins are in standard deviations.\n");
    let rows: Vec<Vec<String>> = metrics.iter().map(|(k, v)| vec![k.clone(), sci(*v)]).collect();
    md.push_str(&markdown_table(&["metric", "value"], &rows));
    out.write("summary.md", md)?;
    Ok(())
}

pub fn read_stats(text: &str) -> Result<Vec<(String, f64)>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
