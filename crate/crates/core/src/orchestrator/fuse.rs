//! Combining the selected models' answers into one.
//!
//! Remote fuser wire contract: `POST <fuser_endpoint>` with
//! `{"query": "...", "candidates": ["...", ...]}` (candidates in selection
//! order), answered by `{"text": "..."}`.

use serde::Serialize;

use super::dispatch::{ModelResponse, TextResponse};
use crate::error::{Error, Result};
use crate::registry::FusionMode;

#[derive(Debug, Serialize)]
struct FuseRequest<'a> {
    query: &'a str,
    candidates: Vec<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub text: String,
    pub mode_used: FusionMode,
    pub warnings: Vec<String>,
}

/// Text of the ok response whose model has the highest predicted score;
/// ties go to the lower model index.
pub fn best_predicted(responses: &[ModelResponse], predicted: &[f64]) -> Result<String> {
    let mut best: Option<(&ModelResponse, f64)> = None;
    for r in responses.iter().filter(|r| r.is_ok()) {
        let score = predicted.get(r.model_index).copied().unwrap_or(f64::NEG_INFINITY);
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && r.model_index < b.model_index),
        };
        if better {
            best = Some((r, score));
        }
    }
    best.and_then(|(r, _)| r.text.clone())
        .ok_or_else(|| Error::FusionImpossible("no successful model responses".into()))
}

async fn remote(
    client: &reqwest::Client,
    endpoint: &str,
    query: &str,
    oks: &[&ModelResponse],
) -> std::result::Result<String, String> {
    let body = FuseRequest { query, candidates: oks.iter().filter_map(|r| r.text.as_deref()).collect() };
    let resp = client.post(endpoint).json(&body).send().await.map_err(|e| format!("fuser request failed: {e}"))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(format!("fuser returned HTTP {}", status.as_u16()));
    }
    let parsed: TextResponse = resp.json().await.map_err(|e| format!("invalid fuser response: {e}"))?;
    parsed.text.filter(|t| !t.is_empty()).ok_or_else(|| "fuser returned empty text".to_string())
}

/// Fuses responses. A remote failure (or a missing endpoint) falls back to
/// [`best_predicted`] and records a warning.
pub async fn fuse(
    client: &reqwest::Client,
    query: &str,
    responses: &[ModelResponse],
    predicted: &[f64],
    mode: FusionMode,
    fuser_endpoint: Option<&str>,
) -> Result<Fused> {
    let oks: Vec<&ModelResponse> = responses.iter().filter(|r| r.is_ok()).collect();
    if oks.is_empty() {
        return Err(Error::FusionImpossible("no successful model responses".into()));
    }
    let mut warnings = Vec::new();
    if mode == FusionMode::Remote {
        match fuser_endpoint {
            Some(endpoint) => match remote(client, endpoint, query, &oks).await {
                Ok(text) => return Ok(Fused { text, mode_used: FusionMode::Remote, warnings }),
                Err(msg) => warnings.push(format!("remote fusion failed ({msg}); used best_predicted")),
            },
            None => warnings.push("no fuser endpoint configured; used best_predicted".to_string()),
        }
    }
    let text = best_predicted(responses, predicted)?;
    Ok(Fused { text, mode_used: FusionMode::BestPredicted, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::dispatch::ResponseStatus;

    fn ok(i: usize, text: &str) -> ModelResponse {
        ModelResponse {
            model_index: i,
            model: format!("m{i}"),
            text: Some(text.into()),
            latency_ms: 1.0,
            status: ResponseStatus::Ok,
        }
    }

    #[test]
    fn best_predicted_picks_argmax_with_low_index_ties() {
        let rs = [ok(0, "a"), ok(1, "b")];
        assert_eq!(best_predicted(&rs, &[-2.0, -3.0]).unwrap(), "a");
        assert_eq!(best_predicted(&rs, &[-3.0, -2.0]).unwrap(), "b");
        assert_eq!(best_predicted(&rs, &[-2.0, -2.0]).unwrap(), "a");
        let failed = ModelResponse { status: ResponseStatus::Timeout, text: None, ..ok(1, "") };
        assert_eq!(best_predicted(&[ok(0, "a"), failed], &[-3.0, -1.0]).unwrap(), "a");
    }

    #[tokio::test]
    async fn single_response_either_mode() {
        let client = reqwest::Client::new();
        let rs = [ok(2, "only")];
        let p = [0.0, 0.0, -1.0];
        let a = fuse(&client, "q", &rs, &p, FusionMode::BestPredicted, None).await.unwrap();
        assert_eq!(a.text, "only");
        let b = fuse(&client, "q", &rs, &p, FusionMode::Remote, None).await.unwrap();
        assert_eq!(b.text, "only");
        assert_eq!(b.warnings.len(), 1);
    }

    #[tokio::test]
    async fn unreachable_fuser_falls_back_with_warning() {
        let client = reqwest::Client::new();
        let rs = [ok(0, "a"), ok(1, "b")];
        // Port 9 (discard) on localhost is expected to refuse connections.
        let f =
            fuse(&client, "q", &rs, &[-3.0, -2.0], FusionMode::Remote, Some("http://127.0.0.1:9/fuse")).await.unwrap();
        assert_eq!(f.text, "b");
        assert_eq!(f.mode_used, FusionMode::BestPredicted);
        assert_eq!(f.warnings.len(), 1);
    }

    #[tokio::test]
    async fn no_ok_responses_is_an_error() {
        let client = reqwest::Client::new();
        let failed = ModelResponse { status: ResponseStatus::Error("boom".into()), text: None, ..ok(0, "") };
        let err = fuse(&client, "q", &[failed], &[0.0], FusionMode::BestPredicted, None).await.unwrap_err();
        assert!(matches!(err, Error::FusionImpossible(_)));
    }
}
