//! HTTP session API.
//!
//! Session state lives on disk; each request reloads it. Turns within one
//! session are serialized: a message arriving while a turn is in flight gets
//! `429 Too Many Requests`.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pz_core::dialogue::{
    ConversationStyle, DialogueError, DialogueRuntime, Session, SessionConfig,
};
use pz_core::memory::AtomicFact;
use pz_core::pipeline::PatientRecord;
use pz_core::store::{DataDir, RecordFilter, RecordStore, SessionStore, StoreError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;

use crate::context::Context;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("address {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("storage unavailable: {0}")]
    Storage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct ServeConfig {
    pub addr: SocketAddr,
}

#[derive(Clone)]
pub struct AppState {
    data: DataDir,
    runtime: Arc<DialogueRuntime>,
    turn_locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    /// `runtime` must persist to `data`'s session directory.
    pub fn new(data: DataDir, runtime: DialogueRuntime) -> Self {
        Self {
            data,
            runtime: Arc::new(runtime),
            turn_locks: Arc::default(),
        }
    }

    pub fn from_context(ctx: &Context) -> Self {
        Self::new(ctx.data.clone(), ctx.runtime())
    }

    fn sessions(&self) -> SessionStore {
        SessionStore::new(self.data.sessions())
    }

    fn turn_lock(&self, session_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.turn_locks.lock().expect("turn lock table poisoned");
        locks.entry(session_id.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::internal(e)
    }
}

impl From<DialogueError> for ApiError {
    fn from(e: DialogueError) -> Self {
        let status = match &e {
            DialogueError::EmptyMessage | DialogueError::InvalidRecord(_) => {
                StatusCode::BAD_REQUEST
            }
            DialogueError::SessionClosed(_) => StatusCode::CONFLICT,
            DialogueError::Gateway(_) | DialogueError::Judge(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub record_id: String,
    #[serde(default = "default_style")]
    pub style: String,
    #[serde(default = "default_true")]
    pub memory_update: bool,
    #[serde(default)]
    pub inspector: bool,
}

fn default_style() -> String {
    ConversationStyle::Plain.to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SendMessage {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertedFact {
    pub fact_id: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageReply {
    pub patient_text: String,
    pub attempts_used: u32,
    /// Present only for inspector sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inserted_facts: Option<Vec<InsertedFact>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LastTurn {
    pub text: String,
    pub attempts_used: u32,
    pub inserted_facts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub session_id: String,
    pub record_id: String,
    pub style: ConversationStyle,
    pub turn_count: usize,
    pub memory_size: usize,
    pub closed: bool,
    pub last_turn: Option<LastTurn>,
}

impl ApiSessionView {
    pub fn of(session: &Session) -> Self {
        Self {
            session_id: session.session_id.clone(),
            record_id: session.record_ref.clone(),
            style: session.style,
            turn_count: session.transcript.len(),
            memory_size: session.memory.len(),
            closed: session.closed,
            last_turn: session.patient_turns().last().map(|t| LastTurn {
                text: t.text.clone(),
                attempts_used: t.attempts_used,
                inserted_facts: t.inserted_fact_ids.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryView {
    pub session_id: String,
    pub facts: Vec<AtomicFact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: String,
    pub department: String,
    pub disease: String,
    pub level: String,
    pub name: String,
    pub gender: String,
    pub age: u32,
}

impl RecordSummary {
    fn of(r: &PatientRecord) -> Self {
        Self {
            record_id: r.record_id.clone(),
            department: r.department.clone(),
            disease: r.disease_info.disease.clone(),
            level: r.disease_info.level.clone(),
            name: r.basic.name.clone(),
            gender: r.basic.gender.to_string(),
            age: r.basic.age,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct RecordQuery {
    pub department: Option<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/records", get(list_records))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/messages", post(send_message))
        .route("/api/sessions/{id}/memory", get(get_memory))
        .with_state(state)
}

/// Runs model and disk work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_records(
    State(state): State<AppState>,
    Query(q): Query<RecordQuery>,
) -> ApiResult<Vec<RecordSummary>> {
    let root = state.data.records();
    let records = blocking(move || {
        let store = RecordStore::open(root)?;
        let filter = RecordFilter {
            department: q.department,
            ..Default::default()
        };
        Ok(store.load_records(&filter)?)
    })
    .await?;
    Ok(Json(records.iter().map(RecordSummary::of).collect()))
}

fn load_session(store: &SessionStore, id: &str) -> Result<Session, ApiError> {
    if !store.exists(id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("no session {id:?}"),
        ));
    }
    Ok(Session::load(store, id)?)
}

async fn create_session(
    State(state): State<AppState>,
    Json(body): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let style: ConversationStyle = body
        .style
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let config = SessionConfig {
        memory_update_enabled: body.memory_update,
        inspector: body.inspector,
        ..Default::default()
    };
    let root = state.data.records();
    let runtime = state.runtime.clone();
    let created = blocking(move || {
        let record = RecordStore::open(root)?
            .get(&body.record_id)?
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    format!("no record {:?}", body.record_id),
                )
            })?;
        let session = runtime.open_session(&record, style, config)?;
        Ok(SessionCreated {
            session_id: session.session_id,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<ApiSessionView> {
    let store = state.sessions();
    let session = blocking(move || load_session(&store, &id)).await?;
    Ok(Json(ApiSessionView::of(&session)))
}

async fn get_memory(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<MemoryView> {
    let store = state.sessions();
    let session = blocking(move || load_session(&store, &id)).await?;
    if !session.config.inspector {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "memory inspector is not enabled for this session",
        ));
    }
    Ok(Json(MemoryView {
        session_id: session.session_id.clone(),
        facts: session.memory.facts().to_vec(),
    }))
}

async fn send_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SendMessage>,
) -> ApiResult<MessageReply> {
    let store = state.sessions();
    if !store.exists(&id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("no session {id:?}"),
        ));
    }
    let guard = state.turn_lock(&id).try_lock_owned().map_err(|_| {
        ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "a turn is already in flight for this session",
        )
    })?;
    let runtime = state.runtime.clone();
    let reply = blocking(move || {
        let _guard = guard;
        let mut session = load_session(&store, &id)?;
        let turn = runtime.patient_reply(&mut session, &body.text)?;
        let inserted_facts = session.config.inspector.then(|| {
            turn.inserted_fact_ids
                .iter()
                .filter_map(|fid| session.memory.get(fid))
                .map(|f| InsertedFact {
                    fact_id: f.fact_id.clone(),
                    statement: f.statement.clone(),
                })
                .collect()
        });
        Ok(MessageReply {
            patient_text: turn.text,
            attempts_used: turn.attempts_used,
            inserted_facts,
        })
    })
    .await?;
    Ok(Json(reply))
}

/// Binds `addr`, mapping an occupied address to `PortInUse`.
pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
        _ => ServeError::Io(e),
    })
}

fn check_storage(data: &DataDir) -> Result<(), ServeError> {
    for dir in [data.records(), data.sessions()] {
        std::fs::create_dir_all(&dir)
            .map_err(|e| ServeError::Storage(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    check_storage(&state.data)?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServeConfig, state: AppState) -> Result<(), ServeError> {
    check_storage(&state.data)?;
    let listener = bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
