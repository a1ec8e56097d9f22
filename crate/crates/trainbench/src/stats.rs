//! Distribution statistics of gradient entries.

use rootopt::DenseMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

pub const TAIL_MULTIPLES: [f64; 3] = [3.0, 5.0, 10.0];
/// Two-sided Gaussian mass beyond 3 standard deviations.
pub const GAUSSIAN_TAIL_3SIGMA: f64 = 0.0027;
pub const HISTOGRAM_BINS: usize = 40;
/// Histogram covers `[-range, range]` in standard deviations.
pub const HISTOGRAM_RANGE: f64 = 10.0;
pub const QQ_POINTS: usize = 99;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (0..=self.counts.len()).map(|i| self.lo + w * i as f64).collect()
    }
}

/// Summary of the pooled entries of one or more gradient matrices.
///
/// Entries are standardized by their own mean and standard deviation before
/// the histogram, tail fractions and Q-Q comparison. When the standard
/// deviation is zero (or fewer than two entries are given) the report is
/// `degenerate` and every shape statistic is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub excess_kurtosis: f64,
    /// `(k, fraction of entries with |z| > k)` for each of [`TAIL_MULTIPLES`]
    pub tail_fractions: Vec<(f64, f64)>,
    /// `max |empirical quantile - Gaussian quantile|` over 1%..99%
    pub qq_deviation: f64,
    pub histogram: Histogram,
    pub degenerate: bool,
}

impl DistributionReport {
    pub fn tail_fraction(&self, k: f64) -> Option<f64> {
        self.tail_fractions.iter().find(|(m, _)| *m == k).map(|(_, f)| *f)
    }
}

pub fn gradient_stats(matrices: &[DenseMatrix]) -> DistributionReport {
    let values: Vec<f64> = matrices.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    entry_stats(&values)
}

pub fn entry_stats(values: &[f64]) -> DistributionReport {
    let n = values.len();
    let mut histogram = Histogram {
        lo: -HISTOGRAM_RANGE,
        hi: HISTOGRAM_RANGE,
        counts: vec![0; HISTOGRAM_BINS],
        below: 0,
        above: 0,
    };
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let m2 = if n == 0 {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
    };
    let std = m2.sqrt();
    if n < 2 || std == 0.0 || !std.is_finite() {
        histogram.counts[HISTOGRAM_BINS / 2] = n as u64;
        return DistributionReport {
            n,
            mean,
            std: 0.0,
            excess_kurtosis: 0.0,
            tail_fractions: TAIL_MULTIPLES.iter().map(|&k| (k, 0.0)).collect(),
            qq_deviation: 0.0,
            histogram,
            degenerate: true,
        };
    }

    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / std).collect();
    let m4 = z.iter().map(|t| t.powi(4)).sum::<f64>() / n as f64;
    let tail_fractions = TAIL_MULTIPLES
        .iter()
        .map(|&k| (k, z.iter().filter(|t| t.abs() > k).count() as f64 / n as f64))
        .collect();

    let width = 2.0 * HISTOGRAM_RANGE / HISTOGRAM_BINS as f64;
    for &t in &z {
        if t < -HISTOGRAM_RANGE {
            histogram.below += 1;
        } else if t >= HISTOGRAM_RANGE {
            histogram.above += 1;
        } else {
            let bin = (((t + HISTOGRAM_RANGE) / width) as usize).min(HISTOGRAM_BINS - 1);
            histogram.counts[bin] += 1;
        }
    }

    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let qq_deviation = (1..=QQ_POINTS)
        .map(|i| {
            let q = i as f64 / (QQ_POINTS + 1) as f64;
            (sorted_quantile(&z, q) - normal.inverse_cdf(q)).abs()
        })
        .fold(0.0, f64::max);

    DistributionReport {
        n,
        mean,
        std,
        excess_kurtosis: m4 - 3.0,
        tail_fractions,
        qq_deviation,
        histogram,
        degenerate: false,
    }
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
