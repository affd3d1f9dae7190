mod common;

use std::net::SocketAddr;

use llm_ensemble::costing::build_query_context;
use llm_ensemble::orchestrator::mock::{MockBehavior, MockScript, MockServer};
use llm_ensemble::orchestrator::{service, Overrides, Pipeline};
use llm_ensemble::predictor::Encoder;
use llm_ensemble::registry::FusionMode;
use llm_ensemble::{select, Candidate, Error};
use serde_json::{json, Value};

const D: usize = 8;
const QUERY: &str = "Explain why the sky looks blue during the day and red at sunset.";
const SCORES: [f64; 4] = [-3.1, -2.6, -2.9, -3.4];

async fn pipeline(script: MockScript, defaults: &str) -> (MockServer, Pipeline) {
    let server = MockServer::start(script).await.unwrap();
    let reg = common::mock_registry(&server, defaults);
    let head = common::constant_head(D, &SCORES);
    let p = Pipeline::new(reg, head, Encoder::HashedNgram { dim: D, seed: 0 }).unwrap();
    (server, p)
}

async fn serve(p: Pipeline) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, service::router(p)).await.unwrap() });
    addr
}

fn standalone_selection(p: &Pipeline, fraction: f64) -> Vec<usize> {
    let reg = p.registry();
    let ctx = build_query_context(reg, "q", QUERY, reg.defaults().token_mode);
    let cands: Vec<Candidate> = SCORES
        .iter()
        .zip(&ctx.costs)
        .enumerate()
        .map(|(i, (&quality, &cost))| Candidate { model_index: i, quality, cost })
        .collect();
    select(&cands, fraction * ctx.total_baseline_cost(), reg.defaults().grid_resolution).unwrap().selected
}

#[tokio::test]
async fn service_answers_with_selection_matching_the_selector() {
    let (_server, p) = pipeline(MockScript::default(), "").await;
    let expected = standalone_selection(&p, 0.5);
    assert!(expected.len() >= 2, "{expected:?}");
    let addr = serve(p).await;
    let client = reqwest::Client::new();
    let resp = client
        .post(format!("http://{addr}/v1/query"))
        .json(&json!({ "text": QUERY, "budget_fraction": 0.5 }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let body: Value = resp.json().await.unwrap();
    let selected: Vec<usize> = serde_json::from_value(body["selection"]["selected"].clone()).unwrap();
    assert_eq!(selected, expected);
    assert_eq!(body["fusion_mode_used"], "remote");
    let fused = body["fused_text"].as_str().unwrap();
    for i in &expected {
        assert!(fused.contains(&format!("[m{i}]")), "{fused}");
    }
    assert!(
        body["budget"]["epsilon"].as_f64().unwrap() <= 0.5 * body["budget"]["baseline_cost"].as_f64().unwrap() + 1.0
    );
    assert!(body["selection"]["total_cost"].as_f64().unwrap() <= body["budget"]["epsilon"].as_f64().unwrap());
}

#[tokio::test]
async fn timeout_under_fuse_partial_still_fuses_with_warning() {
    let (_s, probe) = pipeline(MockScript::default(), "").await;
    let selected = standalone_selection(&probe, 0.5);
    let slow = format!("m{}", selected[0]);
    let script = MockScript::default().with(&slow, MockBehavior::stall(3_000));
    let (_server, p) = pipeline(script, "dispatch_timeout_ms = 300\nfailure_policy = \"fuse_partial\"").await;
    let resp = p.answer_query("q", QUERY, Overrides { budget_fraction: Some(0.5), fusion_mode: None }).await.unwrap();
    assert!(!resp.fused_text.is_empty());
    assert!(!resp.fused_text.contains(&format!("[{slow}]")));
    assert!(resp.warnings.iter().any(|w| w.contains(&slow) && w.contains("timed out")), "{:?}", resp.warnings);
    let timed_out = resp.responses.iter().find(|r| r.model == slow).unwrap();
    assert!(!timed_out.is_ok());
    assert!(timed_out.latency_ms < 2_000.0);
}

#[tokio::test]
async fn fail_fast_turns_a_backend_error_into_an_error() {
    let (_s, probe) = pipeline(MockScript::default(), "").await;
    let broken = format!("m{}", standalone_selection(&probe, 0.5)[0]);
    let script = MockScript::default().with(&broken, MockBehavior::failing(500));
    let (_server, p) = pipeline(script, "failure_policy = \"fail_fast\"").await;
    let err =
        p.answer_query("q", QUERY, Overrides { budget_fraction: Some(0.5), fusion_mode: None }).await.unwrap_err();
    assert!(matches!(err, Error::DispatchFailed(ref m) if m.contains(&broken) && m.contains("500")), "{err}");
}

#[tokio::test]
async fn empty_bodies_and_http_errors_are_partial_failures() {
    let script = MockScript::default().with("m0", MockBehavior::text("")).with("m3", MockBehavior::failing(503));
    let (_server, p) = pipeline(script, "").await;
    let overrides = Overrides { budget_fraction: Some(1.0), fusion_mode: Some(FusionMode::BestPredicted) };
    let resp = p.answer_query("q", QUERY, overrides).await.unwrap();
    assert_eq!(resp.selection.selected, vec![0, 1, 2, 3]);
    assert_eq!(resp.responses.iter().filter(|r| r.is_ok()).count(), 2);
    assert!(resp.warnings.iter().any(|w| w.contains("m0") && w.contains("empty response")), "{:?}", resp.warnings);
    assert!(resp.warnings.iter().any(|w| w.contains("m3") && w.contains("HTTP 503")), "{:?}", resp.warnings);
    assert_eq!(resp.fused_text, format!("[m1] {QUERY}"));

    let all_bad = MockScript::default()
        .with("m0", MockBehavior::failing(500))
        .with("m1", MockBehavior::failing(500))
        .with("m2", MockBehavior::text(""))
        .with("m3", MockBehavior::failing(502));
    let (_server, p) = pipeline(all_bad, "").await;
    let err = p.answer_query("q", QUERY, overrides).await.unwrap_err();
    assert!(matches!(err, Error::DispatchFailed(_)), "{err}");
}

#[tokio::test]
async fn failing_fuser_falls_back_to_best_predicted() {
    let script = MockScript { fuser: Some(MockBehavior::failing(500)), ..MockScript::default() };
    let (_server, p) = pipeline(script, "").await;
    let resp = p.answer_query("q", QUERY, Overrides { budget_fraction: Some(1.0), fusion_mode: None }).await.unwrap();
    assert_eq!(resp.fusion_mode_used, FusionMode::BestPredicted);
    // m1 has the highest predicted score.
    assert_eq!(resp.fused_text, format!("[m1] {QUERY}"));
    assert_eq!(resp.warnings.len(), 1);
}

#[tokio::test]
async fn infeasible_budget_policies() {
    let (_s1, strict) = pipeline(MockScript::default(), "infeasible_policy = \"error\"").await;
    let err = strict
        .answer_query("q", QUERY, Overrides { budget_fraction: Some(0.01), fusion_mode: None })
        .await
        .unwrap_err();
    assert!(matches!(err, Error::InfeasibleBudget { .. }));

    let (_s2, lenient) = pipeline(MockScript::default(), "infeasible_policy = \"cheapest_model\"").await;
    let resp =
        lenient.answer_query("q", QUERY, Overrides { budget_fraction: Some(0.01), fusion_mode: None }).await.unwrap();
    assert_eq!(resp.selection.selected, vec![0]);
    assert!(resp.warnings.iter().any(|w| w.contains("cheapest")));
}

#[tokio::test]
async fn service_error_contract() {
    let (_server, p) = pipeline(MockScript::default(), "").await;
    let addr = serve(p).await;
    let client = reqwest::Client::new();
    let url = format!("http://{addr}/v1/query");

    let r = client.post(&url).json(&json!({ "text": QUERY, "budget_fraction": 0.0 })).send().await.unwrap();
    assert!(r.status().is_client_error());
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["error"]["kind"], "validation");

    let r = client.post(&url).body("{not json").header("content-type", "application/json").send().await.unwrap();
    assert_eq!(r.status(), 400);

    let r = client.post(&url).json(&json!({ "text": "  " })).send().await.unwrap();
    assert_eq!(r.status(), 400);

    let r = client.post(&url).json(&json!({ "text": QUERY, "budget_fraction": 0.01 })).send().await.unwrap();
    assert!(r.status().is_server_error());
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["error"]["kind"], "infeasible_budget");
    assert!(body["error"]["message"].as_str().unwrap().len() > 5);

    let models: Value = client.get(format!("http://{addr}/v1/models")).send().await.unwrap().json().await.unwrap();
    let list = models["models"].as_array().unwrap();
    assert_eq!(list.len(), 4);
    assert_eq!(list[0]["name"], "m0");
    assert_eq!(list[0]["base_cost_per_token"].as_f64().unwrap(), 2e9);

    let health: Value = client.get(format!("http://{addr}/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
}

#[tokio::test]
async fn concurrent_queries_are_independent() {
    let (_server, p) = pipeline(MockScript::default(), "").await;
    let texts: Vec<String> = (0..16).map(|i| format!("{QUERY} variant {i}")).collect();
    let futs = texts.iter().map(|t| p.answer_query("q", t, Overrides::default()));
    let results = futures::future::join_all(futs).await;
    for (t, r) in texts.iter().zip(results) {
        let r = r.unwrap();
        assert!(r.responses.iter().all(|x| x.text.as_deref().unwrap().ends_with(t.as_str())));
    }
}
