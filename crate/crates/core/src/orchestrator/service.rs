//! HTTP front end.
//!
//! - `POST /v1/query`: body `{"text": str, "query_id"?: str, "budget_fraction"?: number,
//!   "fusion_mode"?: "remote" | "best_predicted"}`; answers with the full
//!   [`EnsembleResponse`](super::EnsembleResponse).
//! - `GET /v1/models`: registry entries in order, each with `base_cost_per_token = 2 * n_params`.
//! - `GET /healthz`: `{"status": "ok"}`.
//!
//! Errors are `{"error": {"kind": str, "message": str}}` with a 4xx status for
//! malformed requests and 5xx for pipeline failures.

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Overrides, Pipeline};
use crate::costing::per_token_cost;
use crate::error::{Error, Result};
use crate::predictor::encoder::stable_query_id;
use crate::registry::{validate_fraction, FusionMode};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub text: String,
    #[serde(default)]
    pub query_id: Option<String>,
    #[serde(default)]
    pub budget_fraction: Option<f64>,
    #[serde(default)]
    pub fusion_mode: Option<FusionMode>,
}

#[derive(Debug, Serialize)]
struct ModelEntry<'a> {
    index: usize,
    name: &'a str,
    endpoint: &'a str,
    n_params: u64,
    n_layer: u64,
    d_model: u64,
    max_ctx: u64,
    chars_per_token: f64,
    base_cost_per_token: f64,
}

fn error_response(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "kind": kind, "message": message.into() } }))).into_response()
}

fn pipeline_error(e: Error) -> Response {
    let status = match &e {
        Error::InvalidArgument(_) | Error::MissingEmbedding(_) => StatusCode::BAD_REQUEST,
        Error::DispatchFailed(_) | Error::FusionImpossible(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error_response(status, e.kind(), e.to_string())
}

async fn query(State(p): State<Pipeline>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()),
    };
    if req.text.trim().is_empty() {
        return error_response(StatusCode::BAD_REQUEST, "malformed_request", "`text` must be non-empty");
    }
    if let Some(f) = req.budget_fraction {
        if let Err(e) = validate_fraction(f) {
            return error_response(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string());
        }
    }
    let query_id = req.query_id.unwrap_or_else(|| stable_query_id(&req.text));
    let overrides = Overrides { budget_fraction: req.budget_fraction, fusion_mode: req.fusion_mode };
    match p.answer_query(&query_id, &req.text, overrides).await {
        Ok(resp) => (StatusCode::OK, Json(resp)).into_response(),
        Err(e) => pipeline_error(e),
    }
}

async fn models(State(p): State<Pipeline>) -> Response {
    let entries: Vec<ModelEntry<'_>> = p
        .registry()
        .models()
        .iter()
        .enumerate()
        .map(|(index, m)| ModelEntry {
            index,
            name: &m.name,
            endpoint: &m.endpoint,
            n_params: m.n_params,
            n_layer: m.n_layer,
            d_model: m.d_model,
            max_ctx: m.max_ctx,
            chars_per_token: m.chars_per_token,
            base_cost_per_token: per_token_cost(m, 0),
        })
        .collect();
    Json(json!({ "models": entries })).into_response()
}

async fn healthz() -> Response {
    Json(json!({ "status": "ok" })).into_response()
}

pub fn router(pipeline: Pipeline) -> Router {
    Router::new()
        .route("/v1/query", post(query))
        .route("/v1/models", get(models))
        .route("/healthz", get(healthz))
        .with_state(pipeline)
}

/// Binds and serves until the process is stopped.
pub async fn serve(pipeline: Pipeline, bind: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| Error::io(bind, e))?;
    let addr = listener.local_addr().map_err(|e| Error::io(bind, e))?;
    tracing::info!(%addr, models = pipeline.registry().len(), "serving");
    axum::serve(listener, router(pipeline)).await.map_err(|e| Error::io(bind, e))
}
