use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use floodfuse::analysts::MockChat;
use floodfuse::engine::Engine;
use floodfuse_cli::server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/harvey").join(name)
}

fn engine() -> Engine {
    Engine::load(&fixture("config.toml")).unwrap()
}

async fn call(state: &AppState, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn error_code(body: &str) -> String {
    let v: Value = serde_json::from_str(body).unwrap();
    v["error"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn assess_matches_cli_golden() {
    let state = AppState::ready(engine());
    let (status, body) = call(
        &state,
        "POST",
        "/assess",
        r#"{"zip": "77067", "start": "2017-08-25", "end": "2017-09-01"}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, std::fs::read_to_string(fixture("golden/assess_77067_multimodal.json")).unwrap());
}

#[tokio::test]
async fn requests_before_load_get_503() {
    let state = AppState::default();
    let (status, body) = call(&state, "GET", "/healthz", "").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_code(&body), "not_loaded");
    let (status, _) = call(&state, "POST", "/assess", r#"{"zip":"77067","start":"2017-08-25","end":"2017-09-01"}"#).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    state.set_engine(engine());
    let (status, body) = call(&state, "GET", "/healthz", "").await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert!(v["documents"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn malformed_requests_get_400() {
    let state = AppState::ready(engine());
    for body in [
        r#"{"start": "2017-08-25", "end": "2017-09-01"}"#,
        r#"{"zip": "77067", "start": "2017-09-02", "end": "2017-09-01"}"#,
        r#"{"zip": "7706", "start": "2017-08-25", "end": "2017-09-01"}"#,
        r#"{"zip": "77067", "start": "2017-08-25", "end": "2017-09-01", "mode": "vision"}"#,
        "not json",
    ] {
        let (status, resp) = call(&state, "POST", "/assess", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(error_code(&resp), "invalid_request");
    }
    let (status, _) = call(&state, "POST", "/chat", r#"{"message": "  "}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_zip_gets_404() {
    let state = AppState::ready(engine());
    let (status, body) = call(&state, "POST", "/assess", r#"{"zip":"99999","start":"2017-08-25","end":"2017-09-01"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "unknown_zip");
}

#[tokio::test]
async fn analyst_failure_gets_502() {
    let mut e = engine();
    e.set_models(Arc::new(MockChat::default()), Arc::new(MockChat::default()));
    let state = AppState::ready(e);
    let (status, body) = call(&state, "POST", "/assess", r#"{"zip":"77096","start":"2017-08-27","end":"2017-08-28"}"#).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(error_code(&body), "analyst_failure");
}

#[tokio::test]
async fn chat_parses_then_assesses() {
    let state = AppState::ready(engine());
    let (status, body) =
        call(&state, "POST", "/chat", r#"{"message": "How bad was flooding around Meyerland on Aug 27-28?"}"#).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["parsed"]["zip"], "77096");
    assert_eq!(v["assessment"]["zip"], "77096");
    assert_eq!(v["assessment"]["time_window"]["start"], "2017-08-27");

    // a reply without JSON cannot name a ZIP
    let (status, body) = call(&state, "POST", "/chat", r#"{"message": "what's the weather"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
}
