#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use inker_core::gateway::{load_rules, MockProvider, MockRule, ModelConfig, PromptKind};
use inker_server::store::Store;
use inker_server::{AppState, ServerConfig};
use serde_json::Value;
use tower::ServiceExt;

pub fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn essay(name: &str) -> String {
    std::fs::read_to_string(core_fixtures().join(format!("essays/{name}.txt"))).unwrap()
}

/// Fixture rules with extra latency on the chosen prompt kinds.
pub fn rules_with_delay(kinds: &[PromptKind], ms: u64) -> Vec<MockRule> {
    let mut paths: Vec<_> = std::fs::read_dir(core_fixtures().join("mock"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    let mut rules: Vec<MockRule> = paths.iter().flat_map(|p| load_rules(p).unwrap()).collect();
    for rule in &mut rules {
        if rule.kind.is_some_and(|k| kinds.contains(&k)) {
            rule.delay_ms = ms;
        }
    }
    rules
}

pub fn config() -> ServerConfig {
    ServerConfig {
        model: ModelConfig::mock(),
        ..ServerConfig::default()
    }
}

pub fn app(store: Arc<dyn Store>, rules: Vec<MockRule>) -> (Arc<AppState>, Router) {
    let state = AppState::with_provider(config(), store, Arc::new(MockProvider::from_rules(rules).unwrap()));
    let router = inker_server::api::router(state.clone());
    (state, router)
}

pub async fn send(router: &Router, method: Method, uri: &str, body: Option<&Value>) -> (StatusCode, Value) {
    send_raw(router, method, uri, body.map(|b| b.to_string()), &[]).await
}

pub async fn send_raw(
    router: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
    headers: &[(&str, &str)],
) -> (StatusCode, Value) {
    let mut request = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        request = request.header(*k, *v);
    }
    let request = match body {
        Some(b) => request.header("content-type", "application/json").body(Body::from(b)),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = router.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn wait_for_job(router: &Router, analysis_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let (status, body) = send(router, Method::GET, &format!("/analyses/{analysis_id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if matches!(body["status"].as_str(), Some("done" | "failed")) {
            return body;
        }
        assert!(Instant::now() < deadline, "analysis {analysis_id} did not settle");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Checks `value` against one of the published schemas.
pub fn conforms(schema: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("schemas/{schema}.schema.json"));
    let schema_doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema_doc).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema} schema violations: {errors:#?}\n{value:#}");
}
