//! HTTP+JSON service running live adaptive sampling sessions.
//!
//! | Method and path | Body | Reply |
//! |---|---|---|
//! | `POST /sessions` | [`CreateRequest`] | 201, [`SessionSummary`] |
//! | `GET /sessions` | | list of [`SessionBrief`] |
//! | `GET /sessions/{id}` | | [`SessionSummary`] |
//! | `POST /sessions/{id}/observations` | [`ObservationRequest`] | [`SessionSummary`] |
//! | `POST /sessions/{id}/advance` | [`AdvanceRequest`] | [`SessionSummary`] (simulated sessions) |
//! | `GET /sessions/{id}/posterior?resolution=K` | | [`PosteriorView`] |
//! | `GET /sessions/{id}/trace` | | trace CSV |
//! | `DELETE /sessions/{id}` | | 204, also for unknown ids |
//!
//! Errors reply with `{"error": {"code": "...", "message": "..."}}`.
//! `POST` requests may carry an `Idempotency-Key` header; repeating a key
//! with the same body returns the stored reply without touching the
//! session. Updates to one session are serialized; reads see the last
//! committed state.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

pub use error::{ApiError, ApiResult};
pub use session::{
    AdvanceRequest, CreateRequest, CurvePoint, GridRequest, Joint, Marginal, Mode, ObservationRequest, PosteriorView,
    RecommendationView, Session, SessionBrief, SessionSummary, Status, StoredReply,
};
pub use store::Store;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Upper bound on steps per `advance` call.
pub const MAX_ADVANCE_STEPS: usize = 10_000;

struct Slot {
    write: Mutex<bool>,
    current: RwLock<Arc<Session>>,
}

impl Slot {
    fn new(s: Session) -> Arc<Self> {
        Arc::new(Self { write: Mutex::new(false), current: RwLock::new(Arc::new(s)) })
    }

    fn snapshot(&self) -> Arc<Session> {
        Arc::clone(&self.current.read().expect("session lock poisoned"))
    }
}

struct Inner {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    create_keys: Mutex<HashMap<String, String>>,
    store: Option<Store>,
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// In-memory sessions only.
    pub fn in_memory() -> Self {
        Self::build(None, Vec::new())
    }

    /// Sessions persisted under `dir`; existing snapshots are loaded.
    pub fn with_data_dir(dir: impl Into<PathBuf>) -> ApiResult<Self> {
        let store = Store::open(dir)?;
        let sessions = store.load_all()?;
        Ok(Self::build(Some(store), sessions))
    }

    pub fn open(data_dir: Option<PathBuf>) -> ApiResult<Self> {
        match data_dir {
            Some(d) => Self::with_data_dir(d),
            None => Ok(Self::in_memory()),
        }
    }

    fn build(store: Option<Store>, sessions: Vec<Session>) -> Self {
        let keys = sessions.iter().filter_map(|s| s.create_key.clone().map(|k| (k, s.id.clone()))).collect();
        let map = sessions.into_iter().map(|s| (s.id.clone(), Slot::new(s))).collect();
        Self(Arc::new(Inner { sessions: RwLock::new(map), create_keys: Mutex::new(keys), store }))
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.0.sessions.read().expect("session map poisoned").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    /// Committed state of a session.
    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        Ok(self.slot(id)?.snapshot())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/observations", post(report_observation))
        .route("/sessions/{id}/advance", post(advance_session))
        .route("/sessions/{id}/posterior", get(get_posterior))
        .route("/sessions/{id}/trace", get(get_trace))
        .with_state(state)
}

/// Serves the API on `addr` until interrupted.
pub async fn serve(addr: &str, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let state = AppState::open(data_dir).map_err(|e| anyhow::anyhow!("{}: {}", e.code, e.message))?;
    let addr: SocketAddr = addr.parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))
}

fn idempotency_key(headers: &HeaderMap) -> ApiResult<Option<String>> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .map(|v| {
            v.to_str()
                .map(str::to_string)
                .map_err(|_| ApiError::bad_request("invalid_idempotency_key", "Idempotency-Key must be ASCII"))
        })
        .transpose()
}

fn json_reply(status: StatusCode, value: serde_json::Value) -> Response {
    (status, Json(value)).into_response()
}

fn to_value<T: Serialize>(v: &T) -> ApiResult<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| ApiError::internal(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let request = body(payload)?;
    let key = idempotency_key(&headers)?;
    let request_value = to_value(&request)?;
    let mut keys = state.0.create_keys.lock().await;
    if let Some(k) = &key {
        if let Some(id) = keys.get(k) {
            if let Ok(slot) = state.slot(id) {
                let s = slot.snapshot();
                let stored = s.replies.get(&format!("create:{k}")).cloned();
                return match stored {
                    Some(r) if r.request == request_value => {
                        Ok(json_reply(StatusCode::from_u16(r.status).unwrap_or(StatusCode::CREATED), r.body))
                    }
                    _ => Err(idempotency_mismatch()),
                };
            }
        }
    }
    let id = new_id();
    let store = state.0.store.clone();
    let (session, reply) = blocking({
        let key = key.clone();
        move || {
            let mut s = Session::create(id, request, key.clone())?;
            let reply = to_value(&s.summary())?;
            if let Some(k) = key {
                s.replies.insert(
                    format!("create:{k}"),
                    StoredReply { request: request_value, status: StatusCode::CREATED.as_u16(), body: reply.clone() },
                );
            }
            if let Some(store) = &store {
                store.save(&s)?;
            }
            Ok((s, reply))
        }
    })
    .await?;
    if let Some(k) = key {
        keys.insert(k, session.id.clone());
    }
    state.0.sessions.write().expect("session map poisoned").insert(session.id.clone(), Slot::new(session));
    Ok(json_reply(StatusCode::CREATED, reply))
}

fn idempotency_mismatch() -> ApiError {
    ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        "idempotency_key_reused",
        "Idempotency-Key was already used with a different request",
    )
}

/// Applies `f` to a copy of the session under its write lock and commits
/// the copy (to disk first) only if `f` succeeds.
async fn mutate(
    state: AppState,
    id: String,
    key: Option<String>,
    request: serde_json::Value,
    f: impl FnOnce(&mut Session) -> ApiResult<()> + Send + 'static,
) -> ApiResult<Response> {
    let slot = state.slot(&id)?;
    let deleted = slot.write.lock().await;
    if *deleted {
        return Err(ApiError::not_found(&id));
    }
    let current = slot.snapshot();
    if let Some(k) = &key {
        if let Some(r) = current.replies.get(k) {
            if r.request != request {
                return Err(idempotency_mismatch());
            }
            return Ok(json_reply(StatusCode::from_u16(r.status).unwrap_or(StatusCode::OK), r.body.clone()));
        }
    }
    let store = state.0.store.clone();
    let (session, reply) = blocking(move || {
        let mut s = (*current).clone();
        f(&mut s)?;
        let reply = to_value(&s.summary())?;
        if let Some(k) = key {
            s.replies.insert(k, StoredReply { request, status: StatusCode::OK.as_u16(), body: reply.clone() });
        }
        if let Some(store) = &store {
            store.save(&s)?;
        }
        Ok((s, reply))
    })
    .await?;
    *slot.current.write().expect("session lock poisoned") = Arc::new(session);
    drop(deleted);
    Ok(json_reply(StatusCode::OK, reply))
}

async fn report_observation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Result<Json<ObservationRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let obs = body(payload)?;
    let key = idempotency_key(&headers)?;
    let request = to_value(&obs)?;
    mutate(state, id, key, request, move |s| s.report(obs)).await
}

async fn advance_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Option<Json<AdvanceRequest>>,
) -> ApiResult<Response> {
    let req = payload.map(|Json(r)| r).unwrap_or_default();
    let steps = req.steps.unwrap_or(1);
    if steps > MAX_ADVANCE_STEPS {
        return Err(ApiError::bad_request("too_many_steps", format!("at most {MAX_ADVANCE_STEPS} steps per call")));
    }
    let key = idempotency_key(&headers)?;
    let request = to_value(&req)?;
    mutate(state, id, key, request, move |s| s.advance(steps).map(|_| ())).await
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionBrief>> {
    let slots: Vec<Arc<Slot>> = state.0.sessions.read().expect("session map poisoned").values().cloned().collect();
    let mut out: Vec<SessionBrief> = slots.iter().map(|s| s.snapshot().brief()).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    Ok(Json(state.session(&id)?.summary()))
}

#[derive(Debug, Deserialize)]
struct PosteriorQuery {
    resolution: Option<usize>,
}

async fn get_posterior(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PosteriorQuery>,
) -> ApiResult<Json<PosteriorView>> {
    let s = state.session(&id)?;
    Ok(Json(blocking(move || session::posterior_view(&s, q.resolution)).await?))
}

async fn get_trace(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let csv = state.session(&id)?.run.trace().to_csv_string();
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let Ok(slot) = state.slot(&id) else { return Ok(StatusCode::NO_CONTENT) };
    let mut deleted = slot.write.lock().await;
    if !*deleted {
        *deleted = true;
        state.0.sessions.write().expect("session map poisoned").remove(&id);
        state.0.create_keys.lock().await.retain(|_, v| *v != id);
        if let Some(store) = &state.0.store {
            store.remove(&id)?;
        }
    }
    Ok(StatusCode::NO_CONTENT)
}
