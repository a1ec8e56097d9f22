//! Subcommand implementations. Each writes its artifacts and `summary.md` into
//! an already claimed output directory.

pub mod bench_orth;
pub mod calibrate;
pub mod compare;
pub mod grad_stats;
pub mod report;
pub mod train;

use crate::error::{CliError, CliResult};
use rootopt::matrix::read_dump;
use rootopt::DenseMatrix;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

/// Every `.mtx` file under `paths`, recursing into directories, in sorted order.
pub fn collect_dumps(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    fn walk(p: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
        if p.is_dir() {
            for entry in fs::read_dir(p)? {
                walk(&entry?.path(), out)?;
            }
        } else if p.is_file() {
            if p.extension().is_some_and(|e| e == "mtx") {
                out.push(p.to_path_buf());
            }
        } else {
            return Err(CliError::config(format!("dump path {} does not exist", p.display())));
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        walk(p, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn load_dumps(paths: &[PathBuf]) -> CliResult<Vec<(PathBuf, DenseMatrix)>> {
    collect_dumps(paths)?
        .into_iter()
        .map(|p| {
            let m = read_dump(&p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            Ok((p, m))
        })
        .collect()
}

/// A markdown table with a header row.
pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

pub fn sci(v: f64) -> String {
    format!("{v:.6e}")
}
