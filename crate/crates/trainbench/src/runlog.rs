//! Per-step training records and their CSV form.

use serde::{Deserialize, Serialize};
use std::io;

/// Loss at or above this (or non-finite) marks a run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// loss at the parameters the step started from
    pub loss: f64,
    /// norm of the gradient handed to the optimizer, after injection
    pub grad_norm: f64,
    pub epsilon: Option<f64>,
    pub outlier_frac: Option<f64>,
    /// number of spiked gradient entries
    pub spiked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_loss: f64,
    pub min_loss: f64,
    pub steps_run: u64,
    pub diverged: bool,
    pub diverged_at: Option<u64>,
    pub spike_steps: Vec<u64>,
}

/// Append-only step log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    records: Vec<StepRecord>,
    summary: Option<RunSummary>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    /// If `record.step` does not increase or the log is already finished.
    pub fn push(&mut self, record: StepRecord) {
        assert!(self.summary.is_none(), "run log already finished");
        if let Some(last) = self.records.last() {
            assert!(record.step > last.step, "step {} after {}", record.step, last.step);
        }
        self.records.push(record);
    }

    pub(crate) fn finish(&mut self, final_loss: f64, diverged_at: Option<u64>) {
        let min_loss = self
            .records
            .iter()
            .map(|r| r.loss)
            .chain(std::iter::once(final_loss))
            .filter(|l| !l.is_nan())
            .fold(f64::INFINITY, f64::min);
        self.summary = Some(RunSummary {
            final_loss,
            min_loss,
            steps_run: self.records.len() as u64,
            diverged: diverged_at.is_some(),
            diverged_at,
            spike_steps: self.records.iter().filter(|r| r.spiked > 0).map(|r| r.step).collect(),
        });
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn summary(&self) -> Option<&RunSummary> {
        self.summary.as_ref()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.final_loss)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["step", "loss", "grad_norm", "epsilon", "outlier_frac", "spiked"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<StepRecord>, csv::Error> {
        csv::Reader::from_reader(input).deserialize().collect()
    }
}
