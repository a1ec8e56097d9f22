use super::{load_dumps, markdown_table, sci};
use crate::config::CalibrateConfig;
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use rootopt::calibration::{build_sample_set, calibrate_table, CalibrationError};
use rootopt::orthogonalize::ShapeKey;
use rootopt::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

pub const TABLE_FILE: &str = "coefficients.txt";
pub const REPORT_FILE: &str = "calibration.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub shape: String,
    pub init_loss: f64,
    pub final_loss: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub n_captured: usize,
    pub n_synthetic: usize,
}

pub fn run(cfg: &CalibrateConfig, out: &OutDir) -> CliResult<()> {
    if cfg.shapes.is_empty() {
        return Err(CliError::config("no shapes to calibrate; set `shapes = [[rows, cols], ...]`"));
    }
    if let Some(bad) = cfg.shapes.iter().find(|[r, c]| *r == 0 || *c == 0) {
        return Err(CliError::config(format!("shape {}x{} has a zero dimension", bad[0], bad[1])));
    }
    let calib = cfg.calibration()?;

    let mut captured: BTreeMap<ShapeKey, Vec<DenseMatrix>> = BTreeMap::new();
    for (_, m) in load_dumps(&cfg.captured)? {
        captured.entry(ShapeKey::of(&m)).or_default().push(m);
    }
    let mut keys: Vec<ShapeKey> = Vec::new();
    for [r, c] in &cfg.shapes {
        let k = ShapeKey::new(*r, *c);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let unused: Vec<String> = captured
        .iter()
        .filter(|(k, _)| !keys.contains(k))
        .map(|(k, v)| format!("{k} ({} matrices)", v.len()))
        .collect();

    let sets = keys
        .iter()
        .map(|k| {
            let caps = captured.get(k).map(Vec::as_slice).unwrap_or(&[]);
            build_sample_set(caps, *k, &calib).map_err(|e| CliError::config(format!("shape {k}: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let (mut table, outcomes) = calibrate_table(&sets, &calib);
    let mut failed = Vec::new();
    let mut rows = Vec::new();
    for (key, outcome) in keys.iter().zip(&outcomes) {
        match outcome {
            Ok(o) => rows.push(CalibrationRow {
                shape: key.to_string(),
                init_loss: o.init_loss,
                final_loss: o.final_loss,
                a: o.coefficients.a,
                b: o.coefficients.b,
                c: o.coefficients.c,
                t: o.coefficients.iterations,
                n_captured: o.n_captured,
                n_synthetic: o.n_synthetic,
            }),
            Err(e) => failed.push((*key, e)),
        }
    }
    if !failed.is_empty() {
        let list: Vec<String> = failed.iter().map(|(k, e)| format!("{k}: {e}")).collect();
        table.set_meta("failed", list.join("; "));
    }
    out.write(TABLE_FILE, table.to_text())?;
    let mut w = csv::Writer::from_path(out.join(REPORT_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["shape", "init_loss", "final_loss", "a", "b", "c", "T", "n_captured", "n_synthetic"])?;
    }
    w.flush()?;

    let mut md = String::from("# Coefficient calibration\n\n");
    let _ = writeln!(
        md,
        "{} shapes, T = {}, {} descent steps at step size {}, seed {}.\n",
        keys.len(),
        cfg.iterations,
        cfg.steps,
        cfg.step_size,
        cfg.seed
    );
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.shape.clone(),
                sci(r.init_loss),
                sci(r.final_loss),
                format!("{:.6}", r.a),
                format!("{:.6}", r.b),
                format!("{:.6}", r.c),
                format!("{}/{}", r.n_captured, r.n_synthetic),
            ]
        })
        .collect();
    md.push_str(&markdown_table(
        &["shape", "init loss", "final loss", "a", "b", "c", "captured/synthetic"],
        &table_rows,
    ));
    if !unused.is_empty() {
        let _ = writeln!(md, "\nCaptured matrices of unrequested shapes were ignored: {}.", unused.join(", "));
    }
    for (k, e) in &failed {
        let _ = writeln!(md, "\nShape {k} failed: {e}.");
    }
    out.write("summary.md", md)?;

    match failed.first() {
        None => Ok(()),
        Some((k, e @ (CalibrationError::AllStepsDiverged | CalibrationError::NumericOverflow { .. }))) => {
            Err(CliError::Numeric(format!("shape {k}: {e}")))
        }
        Some((k, e)) => Err(CliError::config(format!("shape {k}: {e}"))),
    }
}

pub fn read_report(text: &str) -> Result<Vec<CalibrationRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
