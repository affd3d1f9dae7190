//! Concurrent generation requests to the selected models.
//!
//! Wire contract for a model endpoint: `POST <endpoint>` with
//! `{"prompt": "...", "max_tokens": N}`, answered by `{"text": "..."}`.
//! The endpoint value `"mock"` is served in-process and echoes the prompt.

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::registry::{ModelSpec, PipelineConfig, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Timeout,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub model_index: usize,
    pub model: String,
    /// Present iff `status` is `Ok`.
    pub text: Option<String>,
    pub latency_ms: f64,
    pub status: ResponseStatus,
}

impl ModelResponse {
    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct GenerateRequest<'a> {
    pub prompt: &'a str,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
pub(crate) struct TextResponse {
    #[serde(default)]
    pub text: Option<String>,
}

/// Text produced by the in-process `mock` endpoint.
pub fn builtin_mock_text(model: &str, prompt: &str) -> String {
    format!("[{model}] {prompt}")
}

async fn generate(client: &reqwest::Client, spec: &ModelSpec, prompt: &str, max_tokens: u32) -> Result<String, String> {
    if spec.is_mock() {
        return Ok(builtin_mock_text(&spec.name, prompt));
    }
    let resp = client
        .post(&spec.endpoint)
        .json(&GenerateRequest { prompt, max_tokens })
        .send()
        .await
        .map_err(|e| format!("request failed: {e}"))?;
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().await.unwrap_or_default();
        return Err(format!("HTTP {}: {}", status.as_u16(), body.trim()));
    }
    let body: TextResponse = resp.json().await.map_err(|e| format!("invalid response body: {e}"))?;
    match body.text {
        Some(t) if !t.is_empty() => Ok(t),
        _ => Err("empty response".to_string()),
    }
}

/// One request per selected model, concurrently, each bounded by the dispatch
/// timeout. Failures are reported in the response status; the result has one
/// entry per index of `selected`, in the same order.
pub async fn dispatch(
    client: &reqwest::Client,
    registry: &Registry,
    selected: &[usize],
    prompt: &str,
    config: &PipelineConfig,
) -> Vec<ModelResponse> {
    let limit = if config.max_parallel == 0 { selected.len().max(1) } else { config.max_parallel };
    let permits = Arc::new(Semaphore::new(limit));
    let timeout: Duration = config.dispatch_timeout;

    let calls = selected.iter().map(|&idx| {
        let permits = Arc::clone(&permits);
        async move {
            let Some(spec) = registry.get(idx) else {
                return ModelResponse {
                    model_index: idx,
                    model: String::new(),
                    text: None,
                    latency_ms: 0.0,
                    status: ResponseStatus::Error(format!("model index {idx} out of range")),
                };
            };
            let _permit = permits.acquire().await.expect("semaphore is never closed");
            let start = Instant::now();
            let outcome = tokio::time::timeout(timeout, generate(client, spec, prompt, config.max_tokens)).await;
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            let (text, status) = match outcome {
                Ok(Ok(text)) => (Some(text), ResponseStatus::Ok),
                Ok(Err(msg)) => (None, ResponseStatus::Error(msg)),
                Err(_) => (None, ResponseStatus::Timeout),
            };
            ModelResponse { model_index: idx, model: spec.name.clone(), text, latency_ms, status }
        }
    });
    join_all(calls).await
}
