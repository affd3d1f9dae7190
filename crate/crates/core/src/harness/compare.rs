//! Knapsack selection against random and single-model baselines.
//!
//! Random subsets are drawn under the same quantized budget the knapsack sees:
//! up to [`REJECTION_TRIES`] draws include each model with probability 1/2 and
//! are kept if non-empty and within capacity; otherwise a random-order greedy
//! fill is used. This approximates uniform sampling over feasible subsets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::registry::{validate_fraction, Registry};
use crate::selector::{choose_alpha, quantize_costs, transform_scores};

use super::dataset::ReplayRecord;
use super::replay::{prepare, realized, PreparedRecord, ReplaySettings, ScoreSource};
use super::report::{ComparisonRow, ComparisonTable};

pub const REJECTION_TRIES: usize = 32;

/// Per-record view used to check the knapsack against each random draw.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordComparison {
    pub query_id: String,
    pub epsilon: f64,
    /// Oracle-knapsack selection and its summed shifted oracle score.
    pub knapsack_selected: Vec<usize>,
    pub knapsack_target: f64,
    /// Each random draw and its summed shifted oracle score (same shift).
    pub random_draws: Vec<Vec<usize>>,
    pub random_targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub table: ComparisonTable,
    pub records: Vec<RecordComparison>,
}

/// Draws one random subset whose cost units fit `capacity`.
pub fn random_feasible_subset(units: &[u64], capacity: u64, rng: &mut impl Rng) -> Vec<usize> {
    let n = units.len();
    for _ in 0..REJECTION_TRIES {
        let subset: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        if !subset.is_empty() && subset.iter().map(|&i| units[i]).sum::<u64>() <= capacity {
            return subset;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut used = 0u64;
    let mut subset = Vec::new();
    for i in order {
        if used + units[i] <= capacity {
            used += units[i];
            subset.push(i);
        }
    }
    subset.sort_unstable();
    subset
}

#[derive(Default)]
struct Accumulator {
    realized: Vec<f64>,
    selected: f64,
    cost_ratio: f64,
    within: f64,
}

impl Accumulator {
    fn add(&mut self, oracle: &[f64], subset: &[usize], cost: f64, epsilon: f64, baseline: f64) {
        self.add_draws(oracle, std::slice::from_ref(&subset.to_vec()), &[cost], epsilon, baseline);
    }

    /// Adds one record's random draws: realized quality is averaged over the
    /// non-empty draws, the other columns over all draws.
    fn add_draws(&mut self, oracle: &[f64], draws: &[Vec<usize>], costs: &[f64], epsilon: f64, baseline: f64) {
        let w = 1.0 / draws.len() as f64;
        let qs: Vec<f64> = draws.iter().filter_map(|d| realized(oracle, d)).collect();
        if !qs.is_empty() {
            self.realized.push(qs.iter().sum::<f64>() / qs.len() as f64);
        }
        let (mut selected, mut ratio, mut within) = (0.0, 0.0, 0.0);
        for (d, &cost) in draws.iter().zip(costs) {
            selected += d.len() as f64;
            ratio += cost / baseline;
            if !d.is_empty() && cost <= epsilon {
                within += 1.0;
            }
        }
        self.selected += selected * w;
        self.cost_ratio += ratio * w;
        self.within += within * w;
    }

    fn row(self, strategy: String, n_records: usize) -> ComparisonRow {
        let n = n_records as f64;
        ComparisonRow {
            strategy,
            records: self.realized.len(),
            mean_realized_quality: (!self.realized.is_empty())
                .then(|| self.realized.iter().sum::<f64>() / self.realized.len() as f64),
            mean_selected: self.selected / n,
            mean_cost_ratio: self.cost_ratio / n,
            within_budget: self.within / n,
        }
    }
}

fn subset_cost(p: &PreparedRecord, subset: &[usize]) -> f64 {
    subset.iter().fold(0.0, |acc, &i| acc + p.candidates[i].cost)
}

/// Compares knapsack selection (oracle and, if given, predicted scores) with
/// `trials` random feasible subsets per record and with each single model.
///
/// For the random strategy each record contributes the mean over its draws.
pub fn baseline_compare(
    records: &[ReplayRecord],
    registry: &Registry,
    fraction: f64,
    trials: usize,
    predictor: Option<ScoreSource<'_>>,
    settings: &ReplaySettings,
) -> Result<Comparison> {
    validate_fraction(fraction)?;
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument("comparison needs at least one record".into()));
    }
    let grid = settings.grid_resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut oracle_acc = Accumulator::default();
    let mut predictor_acc = Accumulator::default();
    let mut random_acc = Accumulator::default();
    let mut single_acc: Vec<Accumulator> = (0..registry.len()).map(|_| Accumulator::default()).collect();
    let mut details = Vec::with_capacity(records.len());

    for record in records {
        let oracle = record.oracle_scores(registry)?;
        let prepared = prepare(record, registry, oracle.clone(), settings.token_mode)?;
        let outcome = prepared.run(fraction, grid)?;
        let sel = &outcome.selection;
        let epsilon = sel.epsilon;
        let baseline = prepared.baseline_cost;
        oracle_acc.add(&oracle, &sel.selected, sel.total_cost, epsilon, baseline);

        if let Some(source) = &predictor {
            let p = prepare(record, registry, source.scores(record, registry)?, settings.token_mode)?;
            let s = p.run(fraction, grid)?.selection;
            predictor_acc.add(&oracle, &s.selected, s.total_cost, epsilon, baseline);
        }

        let costs: Vec<f64> = prepared.candidates.iter().map(|c| c.cost).collect();
        let (units, capacity) = quantize_costs(&costs, epsilon, grid)?;
        // Same shift and summation order as the selector, so equal subsets give equal totals.
        let shifted = transform_scores(&oracle, choose_alpha(&oracle)?)?;
        let target = |s: &[usize]| s.iter().fold(0.0, |acc, &i| acc + shifted[i]);
        let draws: Vec<Vec<usize>> = (0..trials).map(|_| random_feasible_subset(&units, capacity, &mut rng)).collect();
        let draw_costs: Vec<f64> = draws.iter().map(|d| subset_cost(&prepared, d)).collect();
        random_acc.add_draws(&oracle, &draws, &draw_costs, epsilon, baseline);
        let draw_targets = draws.iter().map(|d| target(d)).collect();

        for (i, acc) in single_acc.iter_mut().enumerate() {
            let only = if costs[i] <= epsilon { vec![i] } else { Vec::new() };
            acc.add(&oracle, &only, subset_cost(&prepared, &only), epsilon, baseline);
        }

        details.push(RecordComparison {
            query_id: record.query_id.clone(),
            epsilon,
            knapsack_target: sel.total_target_score,
            knapsack_selected: sel.selected.clone(),
            random_draws: draws,
            random_targets: draw_targets,
        });
    }

    let n = records.len();
    let mut rows = vec![oracle_acc.row("knapsack_oracle".into(), n)];
    if predictor.is_some() {
        rows.push(predictor_acc.row("knapsack_predictor".into(), n));
    }
    rows.push(random_acc.row("random".into(), n));
    for (name, acc) in registry.names().zip(single_acc) {
        rows.push(acc.row(format!("single:{name}"), n));
    }

    let source = predictor.unwrap_or(ScoreSource::Oracle);
    let table = ComparisonTable { metadata: settings.metadata(&source), fraction, trials, rows };
    Ok(Comparison { table, records: details })
}
