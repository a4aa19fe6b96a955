use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use graphshot::server::{router, AppState};
use graphshot_core::active::{AnnotatorSpec, SamplerKind, Setting};
use graphshot_core::experiment::{run_experiment, DatasetContext, DatasetRef, ExperimentConfig, RunRecord};
use graphshot_core::graph::SbmParams;
use graphshot_core::models::{HyperParams, ModelKind};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetRef::Sbm(SbmParams { num_vertices: 120, num_classes: 3, seed: 2, ..SbmParams::default() }),
        model: ModelKind::Gpn,
        sampler: SamplerKind::Medoid,
        setting: Setting::Unbalanced,
        rounds: 2,
        repeats: 1,
        timing: false,
        annotator: AnnotatorSpec::Interactive,
        hyper: HyperParams { max_epochs: 30, ..HyperParams::default() },
        ..ExperimentConfig::default()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn settle(app: &Router) -> String {
    let start = Instant::now();
    loop {
        let (_, state) = call(app, Method::GET, "/session/state", None).await;
        let status = state["status"].as_str().unwrap().to_string();
        if status != "training" {
            return status;
        }
        assert!(start.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_session_matches_oracle_run() {
    let app = router(Arc::new(AppState::default()));
    let cfg = config();
    let ctx = DatasetContext::new(cfg.dataset.load(None).unwrap(), cfg.damping, cfg.split_seed, cfg.test_fraction, cfg.feature_hops)
        .unwrap();
    let truth = ctx.truth().unwrap();

    let (status, state) = call(&app, Method::GET, "/session/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["status"], "idle");
    assert_eq!(call(&app, Method::GET, "/session/query", None).await.0, StatusCode::NOT_FOUND);

    let (status, started) = call(&app, Method::POST, "/session", Some(serde_json::to_value(&cfg).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{started}");
    assert!(started["session_id"].is_string());
    let (status, _) = call(&app, Method::POST, "/session", Some(serde_json::to_value(&cfg).unwrap())).await;
    assert_eq!(status, StatusCode::CONFLICT);

    while settle(&app).await == "awaiting_labels" {
        let (status, batch) = call(&app, Method::GET, "/session/query", None).await;
        assert_eq!(status, StatusCode::OK);
        let answers: HashMap<String, String> = batch["vertices"]
            .as_array()
            .unwrap()
            .iter()
            .map(|q| {
                let v = q["vertex"].as_u64().unwrap() as usize;
                (v.to_string(), ctx.class_names[truth[v]].clone())
            })
            .collect();
        let (status, body) = call(&app, Method::POST, "/session/labels", Some(json!(answers))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["accepted"].as_u64().unwrap() as usize, answers.len());
    }
    assert_eq!(settle(&app).await, "done");
    assert_eq!(call(&app, Method::GET, "/session/query", None).await.0, StatusCode::CONFLICT);
    let (_, body) = call(&app, Method::POST, "/session/labels", Some(json!({"0": "0"}))).await;
    assert!(body["error"].is_string());

    let (status, metrics) = call(&app, Method::GET, "/session/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    let records: Vec<RunRecord> = serde_json::from_value(metrics).unwrap();
    let oracle = run_experiment(&ExperimentConfig { annotator: AnnotatorSpec::Oracle, ..cfg }).unwrap();
    assert_eq!(records, oracle);

    let (status, _) = call(&app, Method::DELETE, "/session", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(call(&app, Method::GET, "/state", None).await.1["status"], "idle");
    assert_eq!(call(&app, Method::DELETE, "/session", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_requests_are_rejected() {
    let app = router(Arc::new(AppState::default()));
    let mut cfg = serde_json::to_value(config()).unwrap();
    cfg["annotator"] = json!({"kind": "oracle"});
    assert_eq!(call(&app, Method::POST, "/session", Some(cfg)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        call(&app, Method::POST, "/session", Some(json!({"resume_token": "!!"}))).await.0,
        StatusCode::BAD_REQUEST
    );

    let (status, _) = call(&app, Method::POST, "/session", Some(serde_json::to_value(config()).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(settle(&app).await, "awaiting_labels");
    let (status, _) = call(&app, Method::POST, "/session/labels", Some(json!({"x": "0"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, "/session/labels", Some(json!({"0": "not-a-class"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn abort_then_resume_continues_the_session() {
    let app = router(Arc::new(AppState::default()));
    call(&app, Method::POST, "/session", Some(serde_json::to_value(config()).unwrap())).await;
    assert_eq!(settle(&app).await, "awaiting_labels");
    let (status, aborted) = call(&app, Method::DELETE, "/session", None).await;
    assert_eq!(status, StatusCode::OK);
    let token = aborted["resume_token"].as_str().unwrap().to_string();
    assert_eq!(aborted["records"].as_array().unwrap().len(), 1);

    let (status, _) = call(&app, Method::POST, "/session", Some(json!({ "resume_token": token }))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(settle(&app).await, "awaiting_labels");
    let (_, state) = call(&app, Method::GET, "/session/state", None).await;
    assert_eq!(state["current_round"], 1);
}
