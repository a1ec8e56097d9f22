use super::{markdown_table, sci};
use crate::config::CompareConfig;
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use rootopt_bench::{compare_optimizers, Comparison, NamedConfig, SyntheticTask};
use std::fmt::Write;

pub const REPORT_FILE: &str = "comparison.csv";

/// Markdown table of per-config mean loss, divergences and wins.
pub fn summary_table(cmp: &Comparison) -> String {
    let rows: Vec<Vec<String>> = cmp
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                sci(s.mean_final_loss),
                s.wins.to_string(),
                s.diverged_runs.to_string(),
            ]
        })
        .collect();
    markdown_table(&["optimizer", "mean final loss", "wins", "diverged runs"], &rows)
}

pub fn run(cfg: &CompareConfig, out: &OutDir) -> CliResult<()> {
    if cfg.configs.is_empty() {
        return Err(CliError::config("no optimizer configs to compare"));
    }
    if cfg.runs == 0 || cfg.steps == 0 {
        return Err(CliError::config("runs and steps must be at least 1"));
    }
    let mut named = Vec::with_capacity(cfg.configs.len());
    for spec in &cfg.configs {
        let label = spec.label();
        if named.iter().any(|n: &NamedConfig| n.label == label) {
            return Err(CliError::config(format!("duplicate config label `{label}`")));
        }
        named.push(NamedConfig::new(label, spec.build(cfg.steps)?));
    }
    // validate the task once up front so a bad shape is a config error
    SyntheticTask::new(cfg.task.clone()).map_err(CliError::config)?;
    let cmp = compare_optimizers(&cfg.task, &named, &cfg.noise, &cfg.seeds(), cfg.steps)
        .map_err(|e| CliError::config(format!("run setup failed: {e}")))?;
    cmp.write_csv(std::fs::File::create(out.join(REPORT_FILE))?)?;

    let mut md = String::from("# Optimizer comparison\n\n");
    let _ = writeln!(
        md,
        "{} on seeds {}..{}, {} steps each. A seed's win goes to the lowest final loss.\n",
        cfg.task.kind().name(),
        cfg.seed,
        cfg.seed + cfg.runs - 1,
        cfg.steps
    );
    md.push_str(&summary_table(&cmp));
    out.write("summary.md", md)?;
    Ok(())
}
