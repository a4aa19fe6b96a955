//! HTTP API over a single interactive annotation session.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use graphshot_core::experiment::session::{ResumeToken, Session, SessionState, SubmitError};
use graphshot_core::experiment::ExperimentConfig;
use serde::Deserialize;
use serde_json::json;

#[derive(Default)]
pub struct AppState {
    session: Mutex<Option<Session>>,
    counter: AtomicU64,
    /// Used when a posted config names no data directory.
    pub data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(data_dir: Option<PathBuf>) -> Self {
        Self { data_dir, ..Self::default() }
    }

    fn session(&self) -> MutexGuard<'_, Option<Session>> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StartRequest {
    Resume { resume_token: String },
    Config(Box<ExperimentConfig>),
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn no_session() -> Response {
    error(StatusCode::NOT_FOUND, "no session")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", post(start).delete(abort))
        .route("/session/state", get(state_handler))
        .route("/state", get(state_handler))
        .route("/session/query", get(query))
        .route("/session/labels", post(labels))
        .route("/session/metrics", get(metrics))
        .with_state(state)
}

async fn start(State(app): State<Arc<AppState>>, Json(req): Json<StartRequest>) -> Response {
    if app.session().as_ref().is_some_and(|s| !s.is_finished()) {
        return error(StatusCode::CONFLICT, "a session is already running; DELETE /session first");
    }
    let id = format!("s{}", app.counter.fetch_add(1, Ordering::Relaxed) + 1);
    let data_dir = app.data_dir.clone();
    let started = tokio::task::spawn_blocking(move || match req {
        StartRequest::Resume { resume_token } => {
            let token = ResumeToken::decode(&resume_token)?;
            Session::resume(id, &token)
        }
        StartRequest::Config(mut cfg) => {
            if cfg.data_dir.is_none() {
                cfg.data_dir = data_dir;
            }
            Session::start(id, *cfg)
        }
    })
    .await;
    match started {
        Ok(Ok(session)) => {
            let body = json!({ "session_id": session.id(), "state": session.state() });
            let old = app.session().replace(session);
            if let Some(old) = old {
                tokio::task::spawn_blocking(move || drop(old));
            }
            (StatusCode::CREATED, Json(body)).into_response()
        }
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn state_handler(State(app): State<Arc<AppState>>) -> Json<SessionState> {
    Json(app.session().as_ref().map_or_else(SessionState::idle, Session::state))
}

async fn query(State(app): State<Arc<AppState>>) -> Response {
    let guard = app.session();
    let Some(session) = guard.as_ref() else {
        return no_session();
    };
    match session.query() {
        Some(batch) => Json(batch).into_response(),
        None => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "no query is awaiting labels", "state": session.state() })),
        )
            .into_response(),
    }
}

async fn labels(State(app): State<Arc<AppState>>, Json(body): Json<HashMap<String, String>>) -> Response {
    let mut parsed = HashMap::with_capacity(body.len());
    for (k, v) in body {
        match k.trim().parse::<usize>() {
            Ok(vertex) => {
                parsed.insert(vertex, v);
            }
            Err(_) => return error(StatusCode::BAD_REQUEST, format!("'{k}' is not a vertex id")),
        }
    }
    let guard = app.session();
    let Some(session) = guard.as_ref() else {
        return no_session();
    };
    match session.submit(&parsed) {
        Ok(n) => Json(json!({ "accepted": n })).into_response(),
        Err(e @ SubmitError::NotAwaiting(_)) => error(StatusCode::CONFLICT, e),
        Err(e @ SubmitError::Invalid(_)) => error(StatusCode::BAD_REQUEST, e),
    }
}

async fn metrics(State(app): State<Arc<AppState>>) -> Response {
    match app.session().as_ref() {
        Some(s) => Json(s.metrics()).into_response(),
        None => no_session(),
    }
}

async fn abort(State(app): State<Arc<AppState>>) -> Response {
    let Some(session) = app.session().take() else {
        return no_session();
    };
    let aborted = tokio::task::spawn_blocking(move || -> graphshot_core::Result<_> {
        let (token, records) = session.abort()?;
        Ok((token.encode()?, records))
    })
    .await;
    match aborted {
        Ok(Ok((token, records))) => Json(json!({ "resume_token": token, "records": records })).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

/// Serves the API until ctrl-c.
pub async fn serve(addr: std::net::SocketAddr, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(AppState::new(data_dir))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
