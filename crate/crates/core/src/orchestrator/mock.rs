//! Scripted model backend for tests and local runs.
//!
//! Serves `POST /v1/generate/:model` with the generation wire contract and
//! `POST /v1/fuse` with the fuser wire contract. Each model's reply is driven
//! by a [`MockBehavior`]; unscripted models answer `"[<model>] <prompt>"`.
//!
//! Script file (JSON):
//!
//! ```json
//! {
//!   "models": {
//!     "m1": { "template": "echo: {query}", "latency_ms": 0, "status": 200 },
//!     "m2": { "latency_ms": 5000 },
//!     "m3": { "status": 500 }
//!   },
//!   "fuser": { "status": 200 }
//! }
//! ```

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBehavior {
    /// Reply text; `{query}` and `{model}` are substituted.
    pub template: String,
    pub latency_ms: u64,
    /// HTTP status to answer with; non-2xx statuses carry an error body.
    pub status: u16,
}

impl Default for MockBehavior {
    fn default() -> Self {
        Self { template: "[{model}] {query}".into(), latency_ms: 0, status: 200 }
    }
}

impl MockBehavior {
    pub fn text(template: impl Into<String>) -> Self {
        Self { template: template.into(), ..Default::default() }
    }

    pub fn stall(latency_ms: u64) -> Self {
        Self { latency_ms, ..Default::default() }
    }

    pub fn failing(status: u16) -> Self {
        Self { status, ..Default::default() }
    }

    pub fn render(&self, model: &str, query: &str) -> String {
        self.template.replace("{model}", model).replace("{query}", query)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub models: HashMap<String, MockBehavior>,
    /// Behavior of `/v1/fuse`. The fused text is the candidates joined by `" | "`
    /// unless a template is given (`{candidates}` and `{query}` are substituted).
    pub fuser: Option<MockBehavior>,
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s)
            .map_err(|e| Error::Parse { context: path.display().to_string(), message: e.to_string() })
    }

    pub fn with(mut self, model: &str, behavior: MockBehavior) -> Self {
        self.models.insert(model.to_string(), behavior);
        self
    }
}

#[derive(Debug, Deserialize)]
struct GenerateBody {
    prompt: String,
    #[allow(dead_code)]
    #[serde(default)]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct FuseBody {
    query: String,
    candidates: Vec<String>,
}

async fn generate(
    State(script): State<Arc<MockScript>>,
    UrlPath(model): UrlPath<String>,
    Json(body): Json<GenerateBody>,
) -> Response {
    let behavior = script.models.get(&model).cloned().unwrap_or_default();
    reply(&behavior, behavior.render(&model, &body.prompt)).await
}

async fn fuse(State(script): State<Arc<MockScript>>, Json(body): Json<FuseBody>) -> Response {
    let behavior = script.fuser.clone().unwrap_or_else(|| MockBehavior::text("{candidates}"));
    let text = behavior.template.replace("{candidates}", &body.candidates.join(" | ")).replace("{query}", &body.query);
    reply(&behavior, text).await
}

async fn reply(behavior: &MockBehavior, text: String) -> Response {
    if behavior.latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(behavior.latency_ms)).await;
    }
    let status = StatusCode::from_u16(behavior.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if status.is_success() {
        (status, Json(json!({ "text": text }))).into_response()
    } else {
        (status, Json(json!({ "error": "scripted failure" }))).into_response()
    }
}

pub fn mock_router(script: MockScript) -> Router {
    Router::new()
        .route("/v1/generate/:model", post(generate))
        .route("/v1/fuse", post(fuse))
        .with_state(Arc::new(script))
}

/// A running mock backend; shut down on drop.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockServer {
    pub async fn start(script: MockScript) -> Result<Self> {
        Self::bind("127.0.0.1:0", script).await
    }

    pub async fn bind(addr: &str, script: MockScript) -> Result<Self> {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::io(addr, e))?;
        let addr = listener.local_addr().map_err(|e| Error::io("mock listener", e))?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = mock_router(script);
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self { addr, shutdown: Some(tx) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Endpoint URL to put in a registry entry for `model`.
    pub fn endpoint(&self, model: &str) -> String {
        format!("http://{}/v1/generate/{}", self.addr, model)
    }

    pub fn fuser_endpoint(&self) -> String {
        format!("http://{}/v1/fuse", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
