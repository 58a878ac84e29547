use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `(coefficient, score)` for every evaluated point, in evaluation order.
    pub points: Vec<(f64, f64)>,
    pub best: f64,
    pub best_score: f64,
}

fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("bad number `{s}` in grid")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(invalid(
                    "grid range needs start <= stop and a positive step",
                ));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| tidy(start + i as f64 * step)).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => {
            return Err(invalid(format!(
                "grid `{text}` is neither start:stop:step nor a list"
            )))
        }
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid("grid must be nonempty and finite"));
    }
    Ok(grid)
}

/// Scores every grid point (in parallel on the current pool) and keeps the
/// highest; ties go to the earliest point.
pub fn coefficient_sweep<F>(grid: &[f64], evaluate: F) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(invalid("empty sweep grid"));
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&c| evaluate(c))
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = grid.iter().copied().zip(scores).collect();
    let (best, best_score) =
        points
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| {
                if p.1 > acc.1 || acc.0.is_nan() {
                    p
                } else {
                    acc
                }
            });
    Ok(SweepResult {
        points,
        best,
        best_score,
    })
}

/// A finer grid of `points` values spanning one coarse step either side of `center`.
pub fn refine_grid(center: f64, coarse_step: f64, points: usize, lower_bound: f64) -> Vec<f64> {
    let points = points.max(2);
    let lo = (center - coarse_step).max(lower_bound);
    let hi = center + coarse_step;
    (0..points)
        .map(|i| tidy(lo + (hi - lo) * i as f64 / (points - 1) as f64))
        .collect()
}

/// A coarse sweep followed by `rounds` refinements around the incumbent.
pub fn refined_sweep<F>(
    grid: &[f64],
    rounds: usize,
    points: usize,
    evaluate: F,
) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut result = coefficient_sweep(grid, &evaluate)?;
    let mut step = grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return Ok(result);
    }
    let lower = grid.iter().copied().fold(f64::INFINITY, f64::min);
    for _ in 0..rounds {
        let fine: Vec<f64> = refine_grid(result.best, step, points, lower)
            .into_iter()
            .filter(|c| !result.points.iter().any(|p| p.0 == *c))
            .collect();
        if fine.is_empty() {
            break;
        }
        let next = coefficient_sweep(&fine, &evaluate)?;
        result.points.extend(next.points);
        if next.best_score > result.best_score {
            result.best = next.best;
            result.best_score = next.best_score;
        }
        step = 2.0 * step / (points.max(2) - 1) as f64;
    }
    Ok(result)
}
