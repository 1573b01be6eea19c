use serde::{Deserialize, Serialize};

use crate::nn::Matrix;

/// Optional input scaling applied before the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalNormalization {
    #[default]
    None,
    /// Per-lead standardization with the episode's own statistics.
    Episode,
    /// Per-lead standardization with training-set statistics.
    Dataset,
    /// Per-lead standardization with the current batch's statistics.
    Batch,
}

/// Per-lead mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-8;

impl SignalStats {
    pub fn of<'a>(signals: impl IntoIterator<Item = &'a Matrix>) -> Option<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for s in signals {
            if sum.is_empty() {
                sum = vec![0.0; s.rows()];
                sq = vec![0.0; s.rows()];
            }
            for l in 0..s.rows().min(sum.len()) {
                for &v in s.row(l) {
                    sum[l] += v;
                    sq[l] += v * v;
                }
            }
            n += s.cols();
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(MIN_STD)).collect();
        Some(Self { mean, std })
    }
}

/// Standardizes each lead with `stats`; leads beyond the stats are left untouched.
pub fn normalize_signal(signal: &Matrix, stats: &SignalStats) -> Matrix {
    let mut out = signal.clone();
    for l in 0..out.rows().min(stats.mean.len()) {
        let (m, s) = (stats.mean[l], stats.std[l]);
        out.row_mut(l).iter_mut().for_each(|v| *v = (*v - m) / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_leads_have_zero_mean_unit_variance() {
        let x = Matrix::from_fn(2, 50, |l, t| (l + 1) as f64 * (t as f64 * 0.3).sin() + l as f64 * 4.0);
        let stats = SignalStats::of([&x]).unwrap();
        let y = normalize_signal(&x, &stats);
        let s2 = SignalStats::of([&y]).unwrap();
        for l in 0..2 {
            assert!(s2.mean[l].abs() < 1e-12);
            assert!((s2.std[l] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_lead_does_not_divide_by_zero() {
        let x = Matrix::filled(1, 10, 1.0);
        let y = normalize_signal(&x, &SignalStats::of([&x]).unwrap());
        assert!(y.is_finite());
    }
}
