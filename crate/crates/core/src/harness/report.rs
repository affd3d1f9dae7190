//! Sweep and comparison reports.
//!
//! Numbers are written with 6 significant digits in a `%g`-like style, so the
//! same report always produces the same bytes. CSV has a fixed header and no
//! metadata; the structured (JSON) form carries metadata and rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Formats `x` with 6 significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `x` rounded to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig(x).parse().expect("fmt_sig output parses")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub encoder: String,
    pub score_source: String,
    pub seed: u64,
    pub grid_resolution: usize,
    pub quality_proxy: String,
}

pub const QUALITY_PROXY: &str =
    "realized quality = max oracle score over the selected models (stand-in for the fused answer's score)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub records: usize,
    /// Records where no model fit the budget.
    pub infeasible: usize,
    pub mean_selected: f64,
    /// Mean over feasible records; `None` when every record was infeasible.
    pub mean_realized_quality: Option<f64>,
    pub mean_predicted_target: f64,
    pub mean_cost_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "structured" | "json" => Ok(ReportFormat::Structured),
            o => Err(format!("unknown report format `{o}`")),
        }
    }
}

pub const SWEEP_CSV_HEADER: &str =
    "fraction,records,infeasible,mean_selected,mean_realized_quality,mean_predicted_target,mean_cost_ratio";

impl SweepRow {
    fn rounded(&self) -> Self {
        Self {
            fraction: round_sig(self.fraction),
            records: self.records,
            infeasible: self.infeasible,
            mean_selected: round_sig(self.mean_selected),
            mean_realized_quality: self.mean_realized_quality.map(round_sig),
            mean_predicted_target: round_sig(self.mean_predicted_target),
            mean_cost_ratio: round_sig(self.mean_cost_ratio),
        }
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_sig(r.fraction),
                r.records,
                r.infeasible,
                fmt_sig(r.mean_selected),
                opt(r.mean_realized_quality),
                fmt_sig(r.mean_predicted_target),
                fmt_sig(r.mean_cost_ratio),
            ));
        }
        out
    }

    /// Same report with every number rounded to 6 significant digits.
    pub fn rounded(&self) -> Self {
        Self { metadata: self.metadata.clone(), rows: self.rows.iter().map(SweepRow::rounded).collect() }
    }

    pub fn to_structured(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.rounded()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_structured(source: &str) -> Result<Self> {
        serde_json::from_str(source)
            .map_err(|e| Error::Parse { context: "sweep report".into(), message: e.to_string() })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Structured => self.to_structured(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    /// Records on which the strategy produced a non-empty selection.
    pub records: usize,
    pub mean_realized_quality: Option<f64>,
    pub mean_selected: f64,
    pub mean_cost_ratio: f64,
    /// Share of records with a non-empty selection within the budget.
    pub within_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub metadata: ReportMetadata,
    pub fraction: f64,
    pub trials: usize,
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISON_CSV_HEADER: &str =
    "strategy,records,mean_realized_quality,mean_selected,mean_cost_ratio,within_budget";

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.strategy,
                r.records,
                opt(r.mean_realized_quality),
                fmt_sig(r.mean_selected),
                fmt_sig(r.mean_cost_ratio),
                fmt_sig(r.within_budget),
            ));
        }
        out
    }

    pub fn to_structured(&self) -> String {
        let mut t = self.clone();
        t.fraction = round_sig(t.fraction);
        for r in &mut t.rows {
            r.mean_realized_quality = r.mean_realized_quality.map(round_sig);
            r.mean_selected = round_sig(r.mean_selected);
            r.mean_cost_ratio = round_sig(r.mean_cost_ratio);
            r.within_budget = round_sig(r.within_budget);
        }
        let mut s = serde_json::to_string_pretty(&t).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Structured => self.to_structured(),
        }
    }
}

pub fn report_emit(report: &SweepReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &report.render(format))
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
