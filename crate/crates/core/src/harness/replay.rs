//! Offline budget sweeps over a replay dataset.

use crate::costing::{build_query_context, TokenMode};
use crate::error::{Error, Result};
use crate::predictor::{Encoder, PredictorHead};
use crate::registry::{validate_fraction, Registry};
use crate::selector::{select, Candidate, SelectionResult};

use super::dataset::ReplayRecord;
use super::report::{ReportMetadata, SweepReport, SweepRow, QUALITY_PROXY};

/// Where per-model quality scores come from during replay.
#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    /// The dataset's oracle scores.
    Oracle,
    /// Scores predicted by a trained head from the query embedding.
    Predictor { head: &'a PredictorHead, encoder: &'a Encoder },
}

impl ScoreSource<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            ScoreSource::Oracle => "oracle",
            ScoreSource::Predictor { .. } => "predictor",
        }
    }

    fn encoder_label(&self) -> String {
        match self {
            ScoreSource::Oracle => "none".into(),
            ScoreSource::Predictor { encoder, .. } => encoder.describe(),
        }
    }

    /// Scores for `record` in registry order.
    pub fn scores(&self, record: &ReplayRecord, registry: &Registry) -> Result<Vec<f64>> {
        match self {
            ScoreSource::Oracle => record.oracle_scores(registry),
            ScoreSource::Predictor { head, encoder } => {
                let e = encoder.embed_checked(&record.query_id, &record.query_text(), head.dims().d)?;
                let scores = head.predict(&e.vector)?;
                if scores.len() != registry.len() {
                    return Err(Error::DimensionMismatch {
                        what: "predictor outputs",
                        expected: registry.len(),
                        found: scores.len(),
                    });
                }
                Ok(scores)
            }
        }
    }
}

/// Shared knobs for replay runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySettings {
    /// Dataset label written to report metadata.
    pub dataset: String,
    pub seed: u64,
    pub grid_resolution: usize,
    pub token_mode: TokenMode,
}

impl ReplaySettings {
    pub fn new(dataset: impl Into<String>) -> Self {
        Self { dataset: dataset.into(), seed: 0, grid_resolution: 1000, token_mode: TokenMode::default() }
    }

    pub(crate) fn metadata(&self, source: &ScoreSource<'_>) -> ReportMetadata {
        ReportMetadata {
            dataset: self.dataset.clone(),
            encoder: source.encoder_label(),
            score_source: source.label().into(),
            seed: self.seed,
            grid_resolution: self.grid_resolution,
            quality_proxy: QUALITY_PROXY.into(),
        }
    }
}

/// One record replayed at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub selection: SelectionResult,
    pub baseline_cost: f64,
    /// Max oracle score over the selected models; `None` when nothing was selected.
    pub realized_quality: Option<f64>,
}

impl RecordOutcome {
    pub fn cost_ratio(&self) -> f64 {
        self.selection.total_cost / self.baseline_cost
    }
}

/// Costs, candidates and oracle scores of one record, computed once and
/// reused across budgets.
#[derive(Debug, Clone)]
pub(crate) struct PreparedRecord {
    pub candidates: Vec<Candidate>,
    pub oracle: Vec<f64>,
    pub baseline_cost: f64,
}

pub(crate) fn prepare(
    record: &ReplayRecord,
    registry: &Registry,
    scores: Vec<f64>,
    token_mode: TokenMode,
) -> Result<PreparedRecord> {
    let oracle = record.oracle_scores(registry)?;
    let ctx = build_query_context(registry, record.query_id.clone(), record.query_text(), token_mode);
    let baseline_cost = ctx.total_baseline_cost();
    if !(baseline_cost > 0.0) {
        return Err(Error::InvalidArgument(format!("record `{}` has zero baseline cost", record.query_id)));
    }
    let candidates = ctx
        .costs
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(model_index, (&cost, &quality))| Candidate { model_index, quality, cost })
        .collect();
    Ok(PreparedRecord { candidates, oracle, baseline_cost })
}

pub(crate) fn realized(oracle: &[f64], selected: &[usize]) -> Option<f64> {
    selected.iter().map(|&i| oracle[i]).reduce(f64::max)
}

impl PreparedRecord {
    pub fn run(&self, fraction: f64, grid_resolution: usize) -> Result<RecordOutcome> {
        let selection = select(&self.candidates, fraction * self.baseline_cost, grid_resolution)?;
        let realized_quality = realized(&self.oracle, &selection.selected);
        Ok(RecordOutcome { selection, baseline_cost: self.baseline_cost, realized_quality })
    }
}

/// Replays one record at one budget fraction.
pub fn replay_record(
    record: &ReplayRecord,
    registry: &Registry,
    source: &ScoreSource<'_>,
    fraction: f64,
    settings: &ReplaySettings,
) -> Result<RecordOutcome> {
    validate_fraction(fraction)?;
    let scores = source.scores(record, registry)?;
    prepare(record, registry, scores, settings.token_mode)?.run(fraction, settings.grid_resolution)
}

/// Per-record outcomes for every fraction: `result[f][r]`.
pub fn replay_outcomes(
    records: &[ReplayRecord],
    registry: &Registry,
    source: &ScoreSource<'_>,
    fractions: &[f64],
    settings: &ReplaySettings,
) -> Result<Vec<Vec<RecordOutcome>>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("replay needs at least one record".into()));
    }
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("replay needs at least one budget fraction".into()));
    }
    for &f in fractions {
        validate_fraction(f)?;
    }
    let prepared = records
        .iter()
        .map(|r| prepare(r, registry, source.scores(r, registry)?, settings.token_mode))
        .collect::<Result<Vec<_>>>()?;
    fractions.iter().map(|&f| prepared.iter().map(|p| p.run(f, settings.grid_resolution)).collect()).collect()
}

pub fn aggregate(fraction: f64, outcomes: &[RecordOutcome]) -> SweepRow {
    let n = outcomes.len() as f64;
    let feasible: Vec<f64> = outcomes.iter().filter_map(|o| o.realized_quality).collect();
    SweepRow {
        fraction,
        records: outcomes.len(),
        infeasible: outcomes.len() - feasible.len(),
        mean_selected: outcomes.iter().map(|o| o.selection.selected.len() as f64).sum::<f64>() / n,
        mean_realized_quality: (!feasible.is_empty()).then(|| feasible.iter().sum::<f64>() / feasible.len() as f64),
        mean_predicted_target: outcomes.iter().map(|o| o.selection.total_target_score).sum::<f64>() / n,
        mean_cost_ratio: outcomes.iter().map(RecordOutcome::cost_ratio).sum::<f64>() / n,
    }
}

/// Replays every record at every fraction and aggregates one row per fraction.
pub fn replay_sweep(
    records: &[ReplayRecord],
    registry: &Registry,
    source: &ScoreSource<'_>,
    fractions: &[f64],
    settings: &ReplaySettings,
) -> Result<SweepReport> {
    let outcomes = replay_outcomes(records, registry, source, fractions, settings)?;
    let rows = fractions.iter().zip(&outcomes).map(|(&f, o)| aggregate(f, o)).collect();
    Ok(SweepReport { metadata: settings.metadata(source), rows })
}
