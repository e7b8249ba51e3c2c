use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::json;

use floodfuse::engine::{Engine, EngineError, ErrorKind};
use floodfuse::eval::ConfigLabel;
use floodfuse::types::TimeWindow;

enum Slot {
    Loading,
    Ready(Arc<Engine>),
    Failed(String),
}

/// Shared service state. The engine slot is filled once loading finishes;
/// until then every endpoint answers 503.
#[derive(Clone)]
pub struct AppState {
    slot: Arc<RwLock<Slot>>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState {
            slot: Arc::new(RwLock::new(Slot::Loading)),
        }
    }
}

impl AppState {
    pub fn ready(engine: Engine) -> Self {
        let s = AppState::default();
        s.set_engine(engine);
        s
    }

    pub fn set_engine(&self, engine: Engine) {
        *self.slot.write() = Slot::Ready(Arc::new(engine));
    }

    pub fn set_failed(&self, reason: String) {
        *self.slot.write() = Slot::Failed(reason);
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        match &*self.slot.read() {
            Slot::Ready(e) => Ok(Arc::clone(e)),
            Slot::Loading => Err(ApiError::unavailable("engine is still loading")),
            Slot::Failed(r) => Err(ApiError::unavailable(&format!("engine failed to load: {r}"))),
        }
    }

    fn take_engine(&self) -> Option<Arc<Engine>> {
        match std::mem::replace(&mut *self.slot.write(), Slot::Loading) {
            Slot::Ready(e) => Some(e),
            _ => None,
        }
    }
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "invalid_request",
            message,
        }
    }

    fn unavailable(message: &str) -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "not_loaded",
            message: message.to_owned(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match e.kind() {
            ErrorKind::BadRequest => (StatusCode::BAD_REQUEST, "invalid_request"),
            ErrorKind::NotFound => (StatusCode::NOT_FOUND, "unknown_zip"),
            ErrorKind::Upstream => (StatusCode::BAD_GATEWAY, "analyst_failure"),
            ErrorKind::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssessRequest {
    zip: String,
    start: NaiveDate,
    end: NaiveDate,
    #[serde(default = "default_mode")]
    mode: ConfigLabel,
}

fn default_mode() -> ConfigLabel {
    ConfigLabel::Multimodal
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    message: String,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, EngineError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        }),
    }
}

async fn assess(
    State(state): State<AppState>,
    body: Result<Json<AssessRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let window = TimeWindow::from_dates(req.start, req.end).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let engine = state.engine()?;
    let resp = blocking(move || engine.assess_with(&req.zip, window, req.mode, true)).await?;
    Ok(json_text(resp.to_json()))
}

async fn chat(
    State(state): State<AppState>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message must not be empty".into()));
    }
    let engine = state.engine()?;
    let resp = blocking(move || engine.chat(&req.message)).await?;
    let mut s = serde_json::to_string_pretty(&resp).expect("response serializes");
    s.push('\n');
    Ok(json_text(s))
}

async fn healthz(State(state): State<AppState>) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    Ok(Json(json!({"status": "ok", "documents": engine.store().len()})).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/assess", post(assess))
        .route("/chat", post(chat))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Binds immediately and loads the engine in the background.
pub async fn serve(config: PathBuf, addr: SocketAddr) -> anyhow::Result<()> {
    let state = AppState::default();
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match Engine::load(&config) {
        Ok(e) => {
            tracing::info!("engine ready");
            loader.set_engine(e);
        }
        Err(e) => {
            tracing::error!(error = %e, "engine failed to load");
            loader.set_failed(e.to_string());
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    // blocking HTTP clients inside the engine must not be dropped on a runtime thread
    if let Some(engine) = state.take_engine() {
        tokio::task::spawn_blocking(move || drop(engine)).await?;
    }
    Ok(())
}
