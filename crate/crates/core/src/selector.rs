//! Budgeted subset selection.
//!
//! Maximizing summed quality subject to summed cost `<= epsilon` is a 0/1
//! knapsack. Quality scores are negative (log-likelihood scale), so each one is
//! shifted by `alpha > max|score|` to make profits positive. Real-valued FLOPs
//! costs are mapped onto an integer grid of `grid_resolution` units by ceiling
//! division, so a subset that fits the grid always fits the real budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::validate_fraction;

/// One model's entry for a single query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateItem {
    pub model_index: usize,
    pub quality: f64,
    pub cost: f64,
    pub target_score: f64,
    pub cost_units: u64,
}

/// Input to [`select`]: model index, predicted quality and FLOPs cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub model_index: usize,
    pub quality: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected model indices, ascending.
    pub selected: Vec<usize>,
    pub total_cost: f64,
    pub total_cost_units: u64,
    pub total_target_score: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub grid_resolution: usize,
    /// True when no candidate fits the budget and the selection is empty.
    pub infeasible: bool,
    pub items: Vec<CandidateItem>,
    /// Subset maximizing the unshifted (raw) quality sum under the same grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_optimal: Option<Vec<usize>>,
}

/// `max|q| + 1`.
pub fn choose_alpha(qualities: &[f64]) -> Result<f64> {
    if qualities.is_empty() {
        return Err(Error::InvalidArgument("cannot choose alpha for an empty score list".into()));
    }
    if let Some(q) = qualities.iter().find(|q| !q.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite quality score {q}")));
    }
    let max_abs = qualities.iter().fold(0.0_f64, |m, q| m.max(q.abs()));
    Ok(max_abs + 1.0)
}

pub fn transform_scores(qualities: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let max_abs = qualities.iter().fold(0.0_f64, |m, q| m.max(q.abs()));
    if !(alpha > max_abs) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must exceed max |score| = {max_abs}")));
    }
    Ok(qualities.iter().map(|q| alpha + q).collect())
}

/// Maps FLOPs costs onto `grid_resolution` integer units of `epsilon / grid_resolution`.
///
/// Returns `(units, capacity)` with `capacity == grid_resolution`.
pub fn quantize_costs(costs: &[f64], epsilon: f64, grid_resolution: usize) -> Result<(Vec<u64>, u64)> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    if grid_resolution < 1 {
        return Err(Error::InvalidArgument("grid_resolution must be >= 1".into()));
    }
    let grid = grid_resolution as f64;
    let unit = epsilon / grid;
    let units = costs
        .iter()
        .map(|&c| {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid cost {c}")));
            }
            if c == 0.0 {
                return Ok(0);
            }
            let scaled = (c * grid / epsilon).ceil();
            if scaled > u64::MAX as f64 / 2.0 {
                return Ok(u64::MAX / 2);
            }
            let mut u = scaled as u64;
            // Rounding in the division can land one unit short.
            while (u as f64) * unit < c {
                u += 1;
            }
            Ok(u)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((units, grid_resolution as u64))
}

/// 0/1 knapsack by dynamic programming over `(n + 1) x (capacity + 1)` states.
///
/// `items` are `(cost_units, profit)`. Backtrace walks `i = n..1`, taking item
/// `i - 1` whenever `dp[i][j] != dp[i - 1][j]`. Returns ascending indices.
/// Profits may be negative; an item is only taken when it strictly improves the row.
pub fn knapsack(items: &[(u64, f64)], capacity: u64) -> Vec<usize> {
    let n = items.len();
    let cap = capacity as usize;
    let width = cap + 1;
    let mut dp = vec![0.0_f64; (n + 1) * width];
    for i in 1..=n {
        let (cost, profit) = items[i - 1];
        let (prev, cur) = dp.split_at_mut(i * width);
        let prev = &prev[(i - 1) * width..];
        let cur = &mut cur[..width];
        for j in 0..width {
            let skip = prev[j];
            cur[j] = if cost <= j as u64 {
                let take = prev[j - cost as usize] + profit;
                if take > skip {
                    take
                } else {
                    skip
                }
            } else {
                skip
            };
        }
    }

    let mut selected = Vec::new();
    let mut j = cap;
    for i in (1..=n).rev() {
        if dp[i * width + j] != dp[(i - 1) * width + j] {
            selected.push(i - 1);
            j -= items[i - 1].0 as usize;
        }
    }
    selected.reverse();
    selected
}

/// Shift, quantize, solve and backtrace for one query.
///
/// When every candidate fits the real budget the full set is returned directly:
/// all shifted scores are positive, so the full set is optimal, and ceiling
/// rounding could otherwise push the summed units just past the grid.
pub fn select(candidates: &[Candidate], epsilon: f64, grid_resolution: usize) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to select from".into()));
    }
    let qualities: Vec<f64> = candidates.iter().map(|c| c.quality).collect();
    let costs: Vec<f64> = candidates.iter().map(|c| c.cost).collect();
    let alpha = choose_alpha(&qualities)?;
    let targets = transform_scores(&qualities, alpha)?;
    let (units, capacity) = quantize_costs(&costs, epsilon, grid_resolution)?;

    let items: Vec<CandidateItem> = candidates
        .iter()
        .zip(&targets)
        .zip(&units)
        .map(|((c, &t), &u)| CandidateItem {
            model_index: c.model_index,
            quality: c.quality,
            cost: c.cost,
            target_score: t,
            cost_units: u,
        })
        .collect();

    let total_all: f64 = costs.iter().sum();
    let positions: Vec<usize> = if total_all <= epsilon {
        (0..items.len()).collect()
    } else {
        let dp_items: Vec<(u64, f64)> = items.iter().map(|it| (it.cost_units, it.target_score)).collect();
        knapsack(&dp_items, capacity)
    };

    Ok(build_result(items, positions, alpha, epsilon, grid_resolution))
}

/// Like [`select`], also reporting the subset that maximizes raw (unshifted)
/// quality under the same quantized constraint.
pub fn select_with_diagnostics(
    candidates: &[Candidate],
    epsilon: f64,
    grid_resolution: usize,
) -> Result<SelectionResult> {
    let mut result = select(candidates, epsilon, grid_resolution)?;
    let dp_items: Vec<(u64, f64)> = result.items.iter().map(|it| (it.cost_units, it.quality)).collect();
    let raw = knapsack(&dp_items, grid_resolution as u64);
    result.raw_optimal = Some(raw.into_iter().map(|p| result.items[p].model_index).collect());
    Ok(result)
}

fn build_result(
    items: Vec<CandidateItem>,
    positions: Vec<usize>,
    alpha: f64,
    epsilon: f64,
    grid_resolution: usize,
) -> SelectionResult {
    let mut chosen: Vec<&CandidateItem> = positions.iter().map(|&p| &items[p]).collect();
    chosen.sort_by_key(|it| it.model_index);
    let selected: Vec<usize> = chosen.iter().map(|it| it.model_index).collect();
    let total_cost = chosen.iter().fold(0.0, |acc, it| acc + it.cost);
    let total_cost_units = chosen.iter().map(|it| it.cost_units).sum();
    let total_target_score = chosen.iter().fold(0.0, |acc, it| acc + it.target_score);
    SelectionResult {
        infeasible: selected.is_empty(),
        selected,
        total_cost,
        total_cost_units,
        total_target_score,
        alpha,
        epsilon,
        grid_resolution,
        items,
        raw_optimal: None,
    }
}

/// Runs [`select`] at `epsilon = fraction * baseline_cost` for each fraction.
pub fn budget_sweep(
    candidates: &[Candidate],
    fractions: &[f64],
    baseline_cost: f64,
    grid_resolution: usize,
) -> Result<Vec<(f64, SelectionResult)>> {
    if !(baseline_cost.is_finite() && baseline_cost > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline cost must be positive, got {baseline_cost}")));
    }
    fractions
        .iter()
        .map(|&f| {
            validate_fraction(f)?;
            Ok((f, select(candidates, f * baseline_cost, grid_resolution)?))
        })
        .collect()
}
