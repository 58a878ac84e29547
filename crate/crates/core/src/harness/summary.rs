use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricRow;
use crate::agents::Algorithm;

/// Mean and sample standard deviation; a single value has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Across-seed return statistics for one env-step bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    /// Inclusive upper env step of the bucket.
    pub step: u64,
    pub n_runs: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Per run, averages the returns of episodes ending in each bucket
/// `(step - bucket, step]`; then takes mean and std across runs.
pub fn aggregate(rows: &[MetricRow], bucket: u64) -> Vec<SummaryRow> {
    let bucket = bucket.max(1);
    // (algorithm, bucket end) -> run -> returns
    let mut cells: BTreeMap<(Algorithm, u64), BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let end = r.env_step.div_ceil(bucket).max(1) * bucket;
        cells
            .entry((r.algorithm, end))
            .or_default()
            .entry(&r.run_id)
            .or_default()
            .push(r.episode_return);
    }
    cells
        .into_iter()
        .map(|((algorithm, step), runs)| {
            let per_run: Vec<f64> = runs
                .values()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            let (mean_return, std_return) = mean_std(&per_run);
            SummaryRow {
                algorithm,
                step,
                n_runs: per_run.len(),
                mean_return,
                std_return,
            }
        })
        .collect()
}

/// Final-window performance of one phase across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub algorithm: Algorithm,
    pub phase: usize,
    pub n_runs: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Mean return of episodes ending in the last `fraction` of each phase,
/// averaged per run and then across runs.
pub fn final_window(rows: &[MetricRow], phase_len: u64, fraction: f64) -> Vec<PhaseSummary> {
    let window = ((phase_len as f64 * fraction).ceil() as u64).clamp(1, phase_len.max(1));
    let mut cells: BTreeMap<(Algorithm, usize), BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let phase_end = (r.phase as u64 + 1) * phase_len;
        if r.env_step > phase_end - window {
            cells
                .entry((r.algorithm, r.phase))
                .or_default()
                .entry(&r.run_id)
                .or_default()
                .push(r.episode_return);
        }
    }
    cells
        .into_iter()
        .map(|((algorithm, phase), runs)| {
            let per_run: Vec<f64> = runs
                .values()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            let (mean, std) = mean_std(&per_run);
            let stderr = std / (per_run.len() as f64).sqrt();
            PhaseSummary {
                algorithm,
                phase,
                n_runs: per_run.len(),
                mean,
                std,
                stderr,
            }
        })
        .collect()
}
