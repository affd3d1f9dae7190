//! Offline evaluation: replay datasets, budget sweeps, baselines and reports.
//!
//! No live models are involved. Each dataset record carries every model's
//! answer and an oracle quality score; replay prices the query, selects under
//! the budget and scores the selection with the realized-quality proxy (the
//! best oracle score among the selected models).

pub mod compare;
pub mod dataset;
pub mod fixture;
pub mod replay;
pub mod report;

pub use compare::{baseline_compare, random_feasible_subset, Comparison, RecordComparison};
pub use dataset::{build_training_set, load_dataset, parse_dataset, write_dataset, ReplayRecord, TargetMode};
pub use replay::{replay_outcomes, replay_record, replay_sweep, RecordOutcome, ReplaySettings, ScoreSource};
pub use report::{report_emit, ComparisonTable, ReportFormat, SweepReport, SweepRow};

/// Fractions of the all-models cost swept by default.
pub const DEFAULT_FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
