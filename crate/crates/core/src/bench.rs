//! Latency summaries for the benchmark command.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_docs: usize,
    pub mean_s: f64,
    /// Population standard deviation.
    pub std_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
}

/// Linear-interpolated percentile of sorted samples, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BenchReport {
    /// Summarizes per-document latencies in seconds. `None` when empty.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n_docs: samples.len(),
            mean_s: mean,
            std_s: var.max(0.0).sqrt(),
            p50_s: percentile(&sorted, 0.5),
            p95_s: percentile(&sorted, 0.95),
        })
    }
}
