use std::path::PathBuf;
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use rcvr_cli::api::{parse_request, predict};
use rcvr_cli::server::{router, AppState};
use rcvr_core::eval::dataset_examples;
use rcvr_core::net::{init_model, NetworkConfig, NetworkModel};
use rcvr_core::ratings::AggregationMode;
use rcvr_core::synth::{generate_dataset, GeneratorConfig, OracleCoefficients};
use rcvr_core::track::{serialize_track, CoasterType};

const FLAT: &[u8] = br#"{"id": "flat", "coaster_type": 0, "points": [[0,0,0],[120,0,0]]}"#;

/// A custom-25 model trained on the default synthetic dataset, saved once.
fn model_file() -> &'static PathBuf {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let ds = generate_dataset(&GeneratorConfig::default(), &OracleCoefficients::default()).unwrap();
        let cfg = NetworkConfig::preset("custom-25").unwrap();
        let examples = dataset_examples(&ds, AggregationMode::Average, cfg.input_mode).unwrap();
        let mut model = init_model(&cfg).unwrap();
        model.train(&examples, None).unwrap();
        let dir = tempfile::tempdir().unwrap().keep();
        let path = dir.join("model.rcvrnet.json");
        model.save(&path).unwrap();
        path
    })
}

fn loaded() -> AppState {
    AppState::new(
        Some(NetworkModel::load(model_file()).unwrap()),
        Some(model_file().clone()),
    )
}

async fn call(state: &AppState, method: &str, uri: &str, body: &[u8]) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_vec()))
        .unwrap();
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn no_model_means_unavailable() {
    let state = AppState::default();
    for (method, uri) in [("GET", "/healthz"), ("GET", "/model"), ("POST", "/predict")] {
        let (status, body) = call(&state, method, uri, FLAT).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(json(&body)["error"]["code"], "ModelNotLoaded");
    }
    let (status, _) = call(&state, "POST", "/reload", b"").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn health_and_model_summary() {
    let state = loaded();
    let (status, _) = call(&state, "GET", "/healthz", b"").await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&state, "GET", "/model", b"").await;
    assert_eq!(status, StatusCode::OK);
    let summary = json(&body);
    assert_eq!(summary["config"]["input_mode"], "custom-only");
    assert_eq!(summary["custom_normalizer"]["dimensions"], 25);
    assert!(summary["sequence_normalizer"].is_null());
}

#[tokio::test]
async fn flat_line_is_low_nausea_and_matches_library_bytes() {
    let state = loaded();
    let (status, body) = call(&state, "POST", "/predict", FLAT).await;
    assert_eq!(status, StatusCode::OK);
    let r = json(&body);
    assert!(r["stars"]["nausea"].as_u64().unwrap() <= 2, "{}", r["stars"]);
    for c in ["fun", "intensity", "nausea", "price"] {
        let probs: Vec<f64> = r["probabilities"][c]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p.as_f64().unwrap())
            .collect();
        assert_eq!(probs.len(), 5);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((1..=5).contains(&r["stars"][c].as_u64().unwrap()));
    }
    let profile = &r["gforce_profile"];
    for g in profile["vertical"].as_array().unwrap() {
        assert!((g.as_f64().unwrap() - 1.0).abs() < 1e-6);
    }
    assert_eq!(r["features"].as_object().unwrap().len(), 25);

    let model = NetworkModel::load(model_file()).unwrap();
    let direct = predict(&model, &parse_request(FLAT).unwrap()).unwrap().to_bytes();
    assert_eq!(body, direct);
    let (_, again) = call(&state, "POST", "/predict", FLAT).await;
    assert_eq!(body, again);
}

#[tokio::test]
async fn track_documents_are_accepted_verbatim() {
    let track = rcvr_core::synth::generate_track(4, CoasterType::Extreme).unwrap();
    let (status, body) = call(&loaded(), "POST", "/predict", &serialize_track(&track)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["id"], track.id());
}

#[tokio::test]
async fn syntax_errors_are_400_and_invariant_errors_422() {
    let state = loaded();
    let (status, body) = call(&state, "POST", "/predict", b"{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"]["code"], "MalformedSyntax");

    let track = rcvr_core::synth::generate_track(1, CoasterType::Gentle).unwrap();
    let mut doc: serde_json::Value = serde_json::from_slice(&serialize_track(&track)).unwrap();
    doc["format_version"] = 9.into();
    let future = serde_json::to_vec(&doc).unwrap();
    let (status, body) = call(&state, "POST", "/predict", &future).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"]["code"], "VersionUnsupported");

    let (status, body) = call(&state, "POST", "/predict", br#"{"points": [[0,0,0],[0,0,0],[5,0,0]]}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err = json(&body);
    assert_eq!(err["error"]["code"], "DegenerateGeometry");
    assert_eq!(err["error"]["index"], 1);
}

#[tokio::test]
async fn reload_swaps_the_snapshot() {
    let state = AppState::default();
    let path = model_file().display().to_string();
    let (status, _) = call(&state, "POST", "/reload", format!(r#"{{"path": "{path}"}}"#).as_bytes()).await;
    assert_eq!(status, StatusCode::OK);
    let before = state.snapshot().unwrap();
    let (status, _) = call(&state, "GET", "/healthz", b"").await;
    assert_eq!(status, StatusCode::OK);

    // a bad path keeps the old model
    let (status, body) = call(&state, "POST", "/reload", br#"{"path": "/nonexistent/m.rcvrnet.json"}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json(&body)["error"]["code"], "Io");
    assert!(std::sync::Arc::ptr_eq(&before, &state.snapshot().unwrap()));

    // an empty body reloads from the remembered path into a fresh snapshot
    let (status, _) = call(&state, "POST", "/reload", b"").await;
    assert_eq!(status, StatusCode::OK);
    let after = state.snapshot().unwrap();
    assert!(!std::sync::Arc::ptr_eq(&before, &after));
    assert_eq!(*before, *after);
}
