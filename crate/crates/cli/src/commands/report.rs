use super::{bench_orth, calibrate, compare, grad_stats, markdown_table, sci, train};
use crate::config::ReportConfig;
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use crate::svg::{line_chart, Series};
use rootopt_bench::{Comparison, RunLog};
use std::fmt::Write;
use std::path::Path;

pub const REPORT_FILE: &str = "report.md";

fn read(dir: &Path, name: &str) -> CliResult<Option<String>> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(Some(std::fs::read_to_string(p)?))
    } else {
        Ok(None)
    }
}

fn parse_err(name: &str) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::config(format!("{name}: {e}"))
}

/// Builds the markdown report for a finished run directory, or `None` if it
/// holds no known artifacts.
pub fn render(dir: &Path, plot: bool) -> CliResult<Option<(String, Option<String>)>> {
    let mut md = String::new();
    let mut svg = None;

    if let Some(text) = read(dir, compare::REPORT_FILE)? {
        let rows = Comparison::read_csv(text.as_bytes()).map_err(parse_err(compare::REPORT_FILE))?;
        let cmp = Comparison::from_rows(rows);
        let seeds = {
            let mut s: Vec<u64> = cmp.rows.iter().map(|r| r.seed).collect();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        let _ = writeln!(md, "## Comparison\n\n{} runs over {} seeds.\n", cmp.rows.len(), seeds);
        md.push_str(&compare::summary_table(&cmp));
        md.push('\n');
    }
    if let Some(text) = read(dir, calibrate::REPORT_FILE)? {
        let rows = calibrate::read_report(&text).map_err(parse_err(calibrate::REPORT_FILE))?;
        md.push_str("## Calibration\n\n");
        let t: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.shape.clone(),
                    sci(r.init_loss),
                    sci(r.final_loss),
                    format!("{:.3}", r.init_loss / r.final_loss),
                ]
            })
            .collect();
        md.push_str(&markdown_table(&["shape", "init loss", "final loss", "improvement"], &t));
        md.push('\n');
    }
    if let Some(text) = read(dir, bench_orth::REPORT_FILE)? {
        let rows = bench_orth::read_report(&text).map_err(parse_err(bench_orth::REPORT_FILE))?;
        md.push_str("## Orthogonalization accuracy\n\n");
        let t: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.shape.clone(), r.strategy.clone(), sci(r.rel_err_mean), sci(r.mse_mean), r.n.to_string()])
            .collect();
        md.push_str(&markdown_table(&["shape", "strategy", "relative error", "MSE", "n"], &t));
        md.push('\n');
    }
    if let Some(text) = read(dir, train::RUNLOG_FILE)? {
        let records = RunLog::read_csv(text.as_bytes()).map_err(parse_err(train::RUNLOG_FILE))?;
        md.push_str("## Training run\n\n");
        let last = records.last();
        let min = records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
        let spiked = records.iter().filter(|r| r.spiked > 0).count();
        let t = vec![
            vec!["steps logged".into(), records.len().to_string()],
            vec!["last logged loss".into(), last.map_or("-".into(), |r| sci(r.loss))],
            vec!["min logged loss".into(), if records.is_empty() { "-".into() } else { sci(min) }],
            vec!["steps with spikes".into(), spiked.to_string()],
        ];
        md.push_str(&markdown_table(&["metric", "value"], &t));
        md.push('\n');
        if plot {
            let series = [Series {
                label: "loss".into(),
                points: records.iter().map(|r| (r.step as f64, r.loss)).collect(),
            }];
            svg = Some(line_chart("training loss", "step", "loss (log scale)", &series, true));
        }
    }
    if let Some(text) = read(dir, train::ROBUSTIFY_FILE)? {
        let rows = train::read_robustify(&text).map_err(parse_err(train::ROBUSTIFY_FILE))?;
        md.push_str("## Outlier suppression\n\n");
        let mut names: Vec<&str> = Vec::new();
        for r in &rows {
            if !names.contains(&r.param_name.as_str()) {
                names.push(&r.param_name);
            }
        }
        let t: Vec<Vec<String>> = names
            .iter()
            .map(|name| {
                let mine: Vec<_> = rows.iter().filter(|r| r.param_name == *name).collect();
                let n = mine.len() as f64;
                vec![
                    name.to_string(),
                    sci(mine.iter().map(|r| r.epsilon).sum::<f64>() / n),
                    sci(mine.iter().map(|r| r.outlier_fraction).sum::<f64>() / n),
                    sci(mine.iter().map(|r| r.outlier_mass_ratio).sum::<f64>() / n),
                ]
            })
            .collect();
        md.push_str(&markdown_table(
            &["param", "mean epsilon", "mean outlier fraction", "mean outlier mass ratio"],
            &t,
        ));
        md.push('\n');
    }
    if let Some(text) = read(dir, grad_stats::STATS_FILE)? {
        let rows = grad_stats::read_stats(&text).map_err(parse_err(grad_stats::STATS_FILE))?;
        md.push_str("## Gradient distribution\n\n");
        let t: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.clone(), sci(*v)]).collect();
        md.push_str(&markdown_table(&["metric", "value"], &t));
        md.push('\n');
    }

    if md.is_empty() {
        return Ok(None);
    }
    Ok(Some((format!("# Run report\n\n{md}"), svg)))
}

pub fn run(cfg: &ReportConfig, out: &OutDir) -> CliResult<()> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| CliError::config("report needs an input directory (--input)"))?;
    if !input.is_dir() {
        return Err(CliError::config(format!("{} is not a directory", input.display())));
    }
    let (md, svg) = render(input, cfg.plot)?
        .ok_or_else(|| CliError::config(format!("{} holds no run artifacts", input.display())))?;
    out.write(REPORT_FILE, md)?;
    if let Some(svg) = svg {
        out.write("loss.svg", svg)?;
    }
    Ok(())
}
