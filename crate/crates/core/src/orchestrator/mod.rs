//! End-to-end query answering: embed, predict, cost, select, dispatch, fuse.

pub mod dispatch;
pub mod fuse;
pub mod mock;
pub mod service;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dispatch::{dispatch, ModelResponse, ResponseStatus};
pub use fuse::{best_predicted, fuse, Fused};
pub use mock::{MockBehavior, MockScript, MockServer};
pub use service::{router, serve};

use crate::costing::build_query_context;
use crate::error::{Error, Result};
use crate::predictor::{Encoder, PredictorHead};
use crate::registry::{validate_fraction, FailurePolicy, FusionMode, InfeasiblePolicy, Registry};
use crate::selector::{select, Candidate, CandidateItem, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub fraction: f64,
    /// FLOPs.
    pub epsilon: f64,
    /// FLOPs of querying every registry model.
    pub baseline_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResponse {
    pub query_id: String,
    pub fused_text: String,
    pub responses: Vec<ModelResponse>,
    pub selection: SelectionResult,
    pub predicted_scores: Vec<f64>,
    pub budget: Budget,
    pub fusion_mode_used: FusionMode,
    pub warnings: Vec<String>,
}

/// Per-request overrides of the registry defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub budget_fraction: Option<f64>,
    pub fusion_mode: Option<FusionMode>,
}

/// Shared read-only state for answering queries.
#[derive(Clone)]
pub struct Pipeline {
    registry: Arc<Registry>,
    head: Arc<PredictorHead>,
    encoder: Arc<Encoder>,
    client: reqwest::Client,
}

impl Pipeline {
    pub fn new(registry: Registry, head: PredictorHead, encoder: Encoder) -> Result<Self> {
        let dims = head.dims();
        if dims.n_models != registry.len() {
            return Err(Error::DimensionMismatch {
                what: "head outputs vs registry size",
                expected: registry.len(),
                found: dims.n_models,
            });
        }
        if encoder.dim() != dims.d {
            return Err(Error::DimensionMismatch {
                what: "encoder width vs head input",
                expected: dims.d,
                found: encoder.dim(),
            });
        }
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { registry: Arc::new(registry), head: Arc::new(head), encoder: Arc::new(encoder), client })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn head(&self) -> &PredictorHead {
        &self.head
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Predicted per-model quality for a query.
    pub fn predict(&self, query_id: &str, text: &str) -> Result<Vec<f64>> {
        let e = self.encoder.embed_checked(query_id, text, self.head.dims().d)?;
        self.head.predict(&e.vector)
    }

    /// Selection for a query without dispatching anything.
    pub fn plan(&self, query_id: &str, text: &str, fraction: f64) -> Result<(Vec<f64>, Budget, SelectionResult)> {
        validate_fraction(fraction)?;
        let defaults = self.registry.defaults();
        let predicted = self.predict(query_id, text)?;
        let ctx = build_query_context(&self.registry, query_id, text, defaults.token_mode);
        let baseline_cost = ctx.total_baseline_cost();
        if !(baseline_cost > 0.0) {
            return Err(Error::InvalidArgument("query text is empty; nothing to price".into()));
        }
        let epsilon = fraction * baseline_cost;
        let candidates: Vec<Candidate> = predicted
            .iter()
            .zip(&ctx.costs)
            .enumerate()
            .map(|(i, (&q, &c))| Candidate { model_index: i, quality: q, cost: c })
            .collect();
        let selection = select(&candidates, epsilon, defaults.grid_resolution)?;
        Ok((predicted, Budget { fraction, epsilon, baseline_cost }, selection))
    }

    pub async fn answer_query(&self, query_id: &str, text: &str, overrides: Overrides) -> Result<EnsembleResponse> {
        let defaults = self.registry.defaults();
        let fraction = overrides.budget_fraction.unwrap_or(defaults.budget_fraction);
        let (predicted, budget, mut selection) = self.plan(query_id, text, fraction)?;
        let mut warnings = Vec::new();

        if selection.infeasible {
            match defaults.infeasible_policy {
                InfeasiblePolicy::Error => return Err(Error::InfeasibleBudget { epsilon: budget.epsilon }),
                InfeasiblePolicy::CheapestModel => {
                    let cheapest = cheapest(&selection.items);
                    warnings.push(format!(
                        "no model fits the budget of {:.6e} FLOPs; dispatching cheapest model `{}` at {:.6e} FLOPs",
                        budget.epsilon,
                        self.registry.models()[cheapest.model_index].name,
                        cheapest.cost
                    ));
                    selection.selected = vec![cheapest.model_index];
                    selection.total_cost = cheapest.cost;
                    selection.total_cost_units = cheapest.cost_units;
                    selection.total_target_score = cheapest.target_score;
                }
            }
        }

        let responses = dispatch(&self.client, &self.registry, &selection.selected, text, defaults).await;
        for r in responses.iter().filter(|r| !r.is_ok()) {
            let why = match &r.status {
                ResponseStatus::Timeout => "timed out".to_string(),
                ResponseStatus::Error(m) => m.clone(),
                ResponseStatus::Ok => unreachable!(),
            };
            if defaults.failure_policy == FailurePolicy::FailFast {
                return Err(Error::DispatchFailed(format!("model `{}`: {why}", r.model)));
            }
            warnings.push(format!("model `{}` failed: {why}", r.model));
        }
        if !responses.iter().any(ModelResponse::is_ok) {
            return Err(Error::DispatchFailed("every selected model failed".into()));
        }

        let mode = overrides.fusion_mode.unwrap_or(defaults.fusion_mode);
        let fused = fuse(&self.client, text, &responses, &predicted, mode, self.registry.fuser_endpoint()).await?;
        warnings.extend(fused.warnings);

        Ok(EnsembleResponse {
            query_id: query_id.to_string(),
            fused_text: fused.text,
            responses,
            selection,
            predicted_scores: predicted,
            budget,
            fusion_mode_used: fused.mode_used,
            warnings,
        })
    }
}

fn cheapest(items: &[CandidateItem]) -> &CandidateItem {
    items
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.model_index.cmp(&b.model_index)))
        .expect("selection always has at least one candidate")
}
