//! Inference cost in FLOPs.
//!
//! The forward pass of a decoder costs roughly `2N + 2 * n_layer * n_ctx * d_model`
//! FLOPs per token, where `N` counts non-embedding parameters. A query of `t`
//! tokens sent to model `i` costs `c_i(t) * t`, with `n_ctx = t` taken from that
//! model's own token count. Only input-context tokens are priced; generated
//! tokens are not included.

use serde::{Deserialize, Serialize};

use crate::registry::{ModelSpec, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    /// `ceil(chars / chars_per_token)`.
    #[default]
    CharsRatio,
    /// Number of maximal non-whitespace runs.
    Whitespace,
}

impl std::str::FromStr for TokenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chars_ratio" | "chars-ratio" => Ok(TokenMode::CharsRatio),
            "whitespace" => Ok(TokenMode::Whitespace),
            other => Err(format!("unknown token mode `{other}`")),
        }
    }
}

pub fn count_tokens(spec: &ModelSpec, text: &str, mode: TokenMode) -> u64 {
    match mode {
        TokenMode::CharsRatio => {
            let chars = text.chars().count();
            if chars == 0 {
                0
            } else {
                (chars as f64 / spec.chars_per_token).ceil() as u64
            }
        }
        TokenMode::Whitespace => text.split_whitespace().count() as u64,
    }
}

/// FLOPs per token: `2 * n_params + 2 * n_layer * n_ctx * d_model`.
pub fn per_token_cost(spec: &ModelSpec, n_ctx: u64) -> f64 {
    2.0 * spec.n_params as f64 + 2.0 * spec.n_layer as f64 * n_ctx as f64 * spec.d_model as f64
}

/// Token count clamped to the model's context window.
pub fn clamped_tokens(spec: &ModelSpec, text: &str, mode: TokenMode) -> (u64, bool) {
    let raw = count_tokens(spec, text, mode);
    if raw > spec.max_ctx {
        (spec.max_ctx, true)
    } else {
        (raw, false)
    }
}

/// Total FLOPs for sending `text` to the model.
pub fn query_cost(spec: &ModelSpec, text: &str, mode: TokenMode) -> f64 {
    let (t, _) = clamped_tokens(spec, text, mode);
    cost_for_tokens(spec, t)
}

fn cost_for_tokens(spec: &ModelSpec, tokens: u64) -> f64 {
    per_token_cost(spec, tokens) * tokens as f64
}

/// Per-model token counts and costs of one query, in registry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    pub query_id: String,
    pub text: String,
    pub token_counts: Vec<u64>,
    pub costs: Vec<f64>,
    /// `clamped[i]` is true when model `i`'s count was cut to its `max_ctx`.
    pub clamped: Vec<bool>,
}

impl QueryContext {
    /// Cost of querying every model in the registry; the budget denominator.
    pub fn total_baseline_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

pub fn build_query_context(
    registry: &Registry,
    query_id: impl Into<String>,
    text: impl Into<String>,
    mode: TokenMode,
) -> QueryContext {
    let text = text.into();
    let n = registry.len();
    let mut token_counts = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    for spec in registry.models() {
        let (t, was_clamped) = clamped_tokens(spec, &text, mode);
        token_counts.push(t);
        costs.push(cost_for_tokens(spec, t));
        clamped.push(was_clamped);
    }
    QueryContext { query_id: query_id.into(), text, token_counts, costs, clamped }
}
