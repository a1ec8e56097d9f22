use super::{markdown_table, sci};
use crate::config::BenchOrthConfig;
use crate::error::{CliError, CliResult};
use crate::outdir::OutDir;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rootopt::calibration::{build_sample_set, calibrate_table, derive_seed, CalibrationConfig};
use rootopt::matrix::polar_factor;
use rootopt::orthogonalize::{ns_orthogonalize, orthogonalization_mse, relative_error, ShapeKey};
use rootopt::{CoefficientTable, DenseMatrix, NsCoefficients};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const REPORT_FILE: &str = "bench_orth.csv";
pub const STRATEGIES: [&str; 3] = ["muon-fixed", "classic-quintic", "adaptive"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub shape: String,
    pub strategy: String,
    pub rel_err_mean: f64,
    pub mse_mean: f64,
    pub n: usize,
}

/// The `i`-th benchmark matrix of a shape.
pub fn sample_matrix(rows: usize, cols: usize, i: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[rows as u64, cols as u64, i as u64]));
    DenseMatrix::random_gaussian(rows, cols, &mut rng)
}

fn coefficients_for<'a>(strategy: &str, fixed: &'a [NsCoefficients; 2], table: &'a CoefficientTable, m: &DenseMatrix) -> &'a NsCoefficients {
    match strategy {
        "muon-fixed" => &fixed[0],
        "classic-quintic" => &fixed[1],
        _ => table.lookup(m.rows(), m.cols()),
    }
}

fn bench_shape(
    rows: usize,
    cols: usize,
    cfg: &BenchOrthConfig,
    table: &CoefficientTable,
) -> CliResult<Vec<BenchRow>> {
    let fixed = [
        NsCoefficients::MUON.with_iterations(cfg.iterations),
        NsCoefficients::CLASSIC.with_iterations(cfg.iterations),
    ];
    let mut sums = vec![(0.0, 0.0); cfg.strategies.len()];
    for i in 0..cfg.samples {
        let m = sample_matrix(rows, cols, i, cfg.seed);
        let exact = polar_factor(&m).map_err(|e| CliError::Numeric(format!("SVD of {rows}x{cols} sample {i}: {e}")))?;
        for (s, strategy) in cfg.strategies.iter().enumerate() {
            let coeffs = coefficients_for(strategy, &fixed, table, &m);
            let numeric = |e: rootopt::orthogonalize::OrthError| CliError::Numeric(format!("{strategy} on {rows}x{cols}: {e}"));
            let approx = ns_orthogonalize(&m, coeffs).map_err(numeric)?;
            sums[s].0 += relative_error(&approx, &exact).map_err(numeric)?;
            sums[s].1 += orthogonalization_mse(&approx, &exact).map_err(numeric)?;
        }
    }
    let n = cfg.samples as f64;
    Ok(cfg
        .strategies
        .iter()
        .zip(sums)
        .map(|(strategy, (rel, mse))| BenchRow {
            shape: format!("{rows}x{cols}"),
            strategy: strategy.clone(),
            rel_err_mean: rel / n,
            mse_mean: mse / n,
            n: cfg.samples,
        })
        .collect())
}

/// Calibrates the benchmarked shapes on synthetic Gaussian spectra.
pub fn calibrate_in_process(cfg: &BenchOrthConfig) -> CliResult<CoefficientTable> {
    let calib = CalibrationConfig {
        iterations: cfg.iterations,
        steps: cfg.calibration_steps,
        synthetic_samples: cfg.calibration_samples,
        seed: cfg.seed,
        ..CalibrationConfig::default()
    };
    calib.validate().map_err(CliError::config)?;
    let sets = cfg
        .shapes
        .iter()
        .map(|[r, c]| build_sample_set(&[], ShapeKey::new(*r, *c), &calib).map_err(CliError::config))
        .collect::<CliResult<Vec<_>>>()?;
    let (table, outcomes) = calibrate_table(&sets, &calib);
    for o in outcomes {
        o.map_err(|e| CliError::Numeric(format!("in-process calibration: {e}")))?;
    }
    Ok(table)
}

pub fn run(cfg: &BenchOrthConfig, out: &OutDir) -> CliResult<()> {
    if cfg.shapes.is_empty() {
        return Err(CliError::config("no shapes to benchmark"));
    }
    if cfg.shapes.iter().any(|[r, c]| *r == 0 || *c == 0) {
        return Err(CliError::config("shapes must have nonzero dimensions"));
    }
    if cfg.samples == 0 || cfg.iterations == 0 {
        return Err(CliError::config("samples and iterations must be at least 1"));
    }
    if cfg.strategies.is_empty() {
        return Err(CliError::config("no strategies selected"));
    }
    if let Some(bad) = cfg.strategies.iter().find(|s| !STRATEGIES.contains(&s.as_str())) {
        return Err(CliError::config(format!(
            "unknown strategy `{bad}`; expected one of {}",
            STRATEGIES.join(", ")
        )));
    }
    let adaptive = cfg.strategies.iter().any(|s| s == "adaptive");
    let table = match (&cfg.table, adaptive) {
        (_, false) => CoefficientTable::muon_default(),
        (Some(path), true) => CoefficientTable::load(path)
            .map_err(|e| CliError::config(format!("cannot load table {}: {e}", path.display())))?,
        (None, true) => calibrate_in_process(cfg)?,
    };
    if adaptive {
        out.write("coefficients.txt", table.to_text())?;
    }

    let per_shape: Vec<CliResult<Vec<BenchRow>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .shapes
            .iter()
            .map(|[r, c]| {
                let table = &table;
                scope.spawn(move || bench_shape(*r, *c, cfg, table))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in per_shape {
        rows.extend(r?);
    }

    let mut w = csv::Writer::from_path(out.join(REPORT_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut md = String::from("# Orthogonalization accuracy\n\n");
    let _ = writeln!(
        md,
        "Error against the SVD polar factor over {} Gaussian matrices per shape, T = {}, seed {}.\n",
        cfg.samples, cfg.iterations, cfg.seed
    );
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.shape.clone(), r.strategy.clone(), sci(r.rel_err_mean), sci(r.mse_mean)])
        .collect();
    md.push_str(&markdown_table(&["shape", "strategy", "relative error", "MSE"], &table_rows));
    out.write("summary.md", md)?;
    Ok(())
}

pub fn read_report(text: &str) -> Result<Vec<BenchRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
