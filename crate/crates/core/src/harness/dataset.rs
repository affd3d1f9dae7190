//! Replay datasets: one JSON object per line.
//!
//! ```json
//! {"query_id": "q0001", "instruction": "...", "input": "...",
//!  "candidates": [{"model": "alpaca-7b", "text": "...", "score": -2.81}, ...]}
//! ```
//!
//! `score` is the oracle quality of that model's answer (negative,
//! log-likelihood scale). Blank lines are ignored.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{Embedding, Encoder};
use crate::registry::Registry;
use crate::selector::choose_alpha;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub model: String,
    #[serde(default)]
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub query_id: String,
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub candidates: Vec<CandidateRecord>,
}

impl ReplayRecord {
    /// Text used for costing and embedding: `instruction + "\n" + input`.
    pub fn query_text(&self) -> String {
        format!("{}\n{}", self.instruction, self.input)
    }

    /// Oracle scores in registry order; errors if a registry model is missing.
    pub fn oracle_scores(&self, registry: &Registry) -> Result<Vec<f64>> {
        registry
            .names()
            .map(|name| {
                self.candidates.iter().find(|c| c.model == name).map(|c| c.score).ok_or_else(|| {
                    Error::InvalidArgument(format!("record `{}` has no candidate for model `{name}`", self.query_id))
                })
            })
            .collect()
    }
}

pub fn parse_dataset(source: &str, label: &str, registry: &Registry) -> Result<Vec<ReplayRecord>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| parse_line(line, label, i + 1, registry))
        .collect()
}

fn parse_line(line: &str, label: &str, lineno: usize, registry: &Registry) -> Result<ReplayRecord> {
    let err = |message: String| Error::Dataset { path: label.to_string(), line: lineno, message };
    let rec: ReplayRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    for c in &rec.candidates {
        if registry.model_index(&c.model).is_err() {
            return Err(err(format!("unknown model `{}`", c.model)));
        }
        if !c.score.is_finite() {
            return Err(err(format!("non-finite score for model `{}`", c.model)));
        }
    }
    Ok(rec)
}

pub fn load_dataset(path: impl AsRef<Path>, registry: &Registry) -> Result<Vec<ReplayRecord>> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, &label, i + 1, registry)?);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[ReplayRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        let line = serde_json::to_string(r).expect("records always serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

/// Whether training targets are the raw oracle scores or the shifted
/// (`alpha + score`, alpha chosen per record) knapsack profits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    #[default]
    Raw,
    Shifted,
}

impl std::str::FromStr for TargetMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(TargetMode::Raw),
            "shifted" => Ok(TargetMode::Shifted),
            o => Err(format!("unknown target mode `{o}`")),
        }
    }
}

pub fn build_training_set(
    records: &[ReplayRecord],
    registry: &Registry,
    encoder: &Encoder,
    mode: TargetMode,
) -> Result<Vec<(Embedding, Vec<f64>)>> {
    records
        .iter()
        .map(|r| {
            let mut target = r.oracle_scores(registry)?;
            if mode == TargetMode::Shifted {
                let alpha = choose_alpha(&target)?;
                target.iter_mut().for_each(|t| *t += alpha);
            }
            let e = encoder.embed(&r.query_id, &r.query_text())?;
            Ok((e, target))
        })
        .collect()
}
