//! JSON prediction service over an atomically swappable model snapshot.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;

use rcvr_core::error::Error;
use rcvr_core::net::NetworkModel;

use crate::api::{parse_request, predict, ModelSummary};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Default)]
struct Inner {
    model: Option<Arc<NetworkModel>>,
    path: Option<PathBuf>,
}

/// Requests clone the current `Arc` and never hold the lock while working,
/// so a reload cannot tear an in-flight prediction.
#[derive(Clone, Default)]
pub struct AppState(Arc<RwLock<Inner>>);

impl AppState {
    pub fn new(model: Option<NetworkModel>, path: Option<PathBuf>) -> Self {
        AppState(Arc::new(RwLock::new(Inner {
            model: model.map(Arc::new),
            path,
        })))
    }

    pub fn snapshot(&self) -> Option<Arc<NetworkModel>> {
        self.0.read().expect("state lock").model.clone()
    }

    fn model_path(&self) -> Option<PathBuf> {
        self.0.read().expect("state lock").path.clone()
    }

    fn swap(&self, model: NetworkModel, path: PathBuf) {
        let mut inner = self.0.write().expect("state lock");
        inner.model = Some(Arc::new(model));
        inner.path = Some(path);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/predict", post(predict_handler))
        .route("/model", get(model_handler))
        .route("/healthz", get(health_handler))
        .route("/reload", post(reload_handler))
        .with_state(state)
}

fn json(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_body(code: &str, message: &str) -> Vec<u8> {
    let mut out = serde_json::to_vec(&serde_json::json!({
        "error": { "code": code, "message": message, "index": null }
    }))
    .expect("error encodes");
    out.push(b'\n');
    out
}

fn not_loaded() -> Response {
    json(
        StatusCode::SERVICE_UNAVAILABLE,
        error_body("ModelNotLoaded", "no model loaded; POST /reload with a model path"),
    )
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::MalformedSyntax(_) | Error::VersionUnsupported(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn domain_error(e: &Error) -> Response {
    let mut body = serde_json::to_vec(&e.to_json()).expect("error encodes");
    body.push(b'\n');
    json(status_of(e), body)
}

async fn predict_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.snapshot() else {
        return not_loaded();
    };
    match parse_request(&body).and_then(|track| predict(&model, &track)) {
        Ok(r) => json(StatusCode::OK, r.to_bytes()),
        Err(e) => domain_error(&e),
    }
}

async fn model_handler(State(state): State<AppState>) -> Response {
    match state.snapshot() {
        Some(m) => json(StatusCode::OK, summary_bytes(&m)),
        None => not_loaded(),
    }
}

fn summary_bytes(model: &NetworkModel) -> Vec<u8> {
    let mut out = serde_json::to_vec(&ModelSummary::of(model)).expect("summary encodes");
    out.push(b'\n');
    out
}

async fn health_handler(State(state): State<AppState>) -> Response {
    match state.snapshot() {
        Some(_) => json(StatusCode::OK, b"{\"status\":\"ok\"}\n".to_vec()),
        None => not_loaded(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReloadRequest {
    path: Option<PathBuf>,
}

/// Loads from `{"path": ...}` or, with an empty body, from the last path.
/// A failed load leaves the current snapshot in place.
async fn reload_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let requested = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        match serde_json::from_slice::<ReloadRequest>(&body) {
            Ok(r) => r.path,
            Err(e) => return domain_error(&Error::MalformedSyntax(e.to_string())),
        }
    };
    let Some(path) = requested.or_else(|| state.model_path()) else {
        return json(
            StatusCode::BAD_REQUEST,
            error_body("MissingPath", "no model path given and none configured"),
        );
    };
    let loaded = tokio::task::spawn_blocking({
        let path = path.clone();
        move || NetworkModel::load(path)
    })
    .await
    .expect("load task");
    match loaded {
        Ok(model) => {
            let body = summary_bytes(&model);
            state.swap(model, path);
            json(StatusCode::OK, body)
        }
        Err(e) => domain_error(&e),
    }
}

pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
