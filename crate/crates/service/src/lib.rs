//! HTTP host for live closed-loop sessions.
//!
//! Each session owns one control loop running on its own task. Handlers only
//! queue commands on the session; the loop applies them between ticks and
//! publishes every tick on a watch channel, so stream consumers always see
//! the latest event and never slow the loop down.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use ferromanip::harness::preset_paths;
use ferromanip::session::{Command, ParamUpdate, Session, SessionConfig, StateEvent};
use ferromanip::{ReferencePath, Vec2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use tokio::task::AbortHandle;
use tower_http::services::ServeDir;

/// Ticks run back to back in turbo mode before yielding to other tasks.
const TURBO_BATCH: u64 = 256;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Run ticks as fast as possible instead of on the wall clock.
    pub turbo: bool,
    /// Simulated seconds after which a turbo session stops ticking, so an
    /// abandoned session cannot grow its log without bound.
    pub turbo_limit_s: f64,
    /// Directory served for every path no API route claims.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            turbo: false,
            turbo_limit_s: 600.0,
            static_dir: None,
        }
    }
}

struct Entry {
    session: Mutex<Session>,
    events: watch::Sender<StateEvent>,
    task: Mutex<Option<AbortHandle>>,
}

impl Entry {
    fn submit(&self, cmd: Command) -> Result<(), ApiError> {
        self.session
            .lock()
            .unwrap()
            .submit(cmd)
            .map_err(ApiError::bad_request)
    }
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<u64, Arc<Entry>>>>,
    next_id: Arc<AtomicU64>,
    options: Arc<ServiceOptions>,
}

impl AppState {
    pub fn new(options: ServiceOptions) -> Self {
        AppState {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            options: Arc::new(options),
        }
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        id.parse::<u64>()
            .ok()
            .and_then(|n| self.sessions.lock().unwrap().get(&n).cloned())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
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

/// Parse a JSON body; an empty body reads as `null`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"null"
    } else {
        body
    };
    serde_json::from_slice(text).map_err(ApiError::bad_request)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBody {
    pub x_mm: f64,
    pub y_mm: f64,
}

impl From<PointBody> for Vec2 {
    fn from(p: PointBody) -> Vec2 {
        Vec2::new(p.x_mm, p.y_mm)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathBody {
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

fn to_path(body: &PathBody, workspace_radius: f64) -> Result<ReferencePath, ApiError> {
    let name = body.name.as_deref().unwrap_or("drawn");
    ReferencePath::from_points(name, &body.points, workspace_radius).map_err(ApiError::bad_request)
}

fn spawn_loop(entry: Arc<Entry>, options: &ServiceOptions) -> AbortHandle {
    let dt = entry.session.lock().unwrap().spec().cfg.tick_dt();
    let tick = {
        let entry = entry.clone();
        move || {
            let ev = entry.session.lock().unwrap().tick();
            let t = ev.t_s;
            entry.events.send_replace(ev);
            t
        }
    };
    if options.turbo {
        let limit = options.turbo_limit_s;
        tokio::spawn(async move {
            loop {
                for _ in 0..TURBO_BATCH {
                    if tick() >= limit {
                        return;
                    }
                }
                tokio::task::yield_now().await;
            }
        })
        .abort_handle()
    } else {
        tokio::spawn(async move {
            let mut clock = tokio::time::interval(Duration::from_secs_f64(dt));
            // Late ticks are caught up rather than dropped, so the tick count
            // tracks wall time regardless of load.
            clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
            loop {
                clock.tick().await;
                tick();
            }
        })
        .abort_handle()
    }
}

/// `POST /sessions`. The body is a session config, optionally with an
/// initial `target` or `path` applied before the first tick.
async fn create(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let mut value: serde_json::Value = parse(&body)?;
    if value.is_null() {
        value = serde_json::json!({});
    }
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ApiError::bad_request("session config must be a JSON object"))?;
    let target = obj.remove("target");
    let path = obj.remove("path");
    let config: SessionConfig = serde_json::from_value(value).map_err(ApiError::bad_request)?;
    let mut session = Session::new(&config).map_err(ApiError::bad_request)?;
    if let Some(t) = target {
        let p: PointBody = serde_json::from_value(t).map_err(ApiError::bad_request)?;
        session
            .submit(Command::Target(p.into()))
            .map_err(ApiError::bad_request)?;
    }
    if let Some(p) = path {
        let body: PathBody = serde_json::from_value(p).map_err(ApiError::bad_request)?;
        let path = to_path(&body, session.spec().cfg.workspace_radius)?;
        session
            .submit(Command::Path(path))
            .map_err(ApiError::bad_request)?;
    }
    let (events, _) = watch::channel(session.snapshot());
    let entry = Arc::new(Entry {
        session: Mutex::new(session),
        events,
        task: Mutex::new(None),
    });
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    app.sessions.lock().unwrap().insert(id, entry.clone());
    *entry.task.lock().unwrap() = Some(spawn_loop(entry.clone(), &app.options));
    tracing::info!(id, "session created");
    Ok((StatusCode::CREATED, Json(Created { id: id.to_string() })).into_response())
}

async fn remove(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let entry = app.entry(&id)?;
    app.sessions
        .lock()
        .unwrap()
        .retain(|_, e| !Arc::ptr_eq(e, &entry));
    if let Some(task) = entry.task.lock().unwrap().take() {
        task.abort();
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn state(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<StateEvent>, ApiError> {
    Ok(Json(app.entry(&id)?.events.borrow().clone()))
}

async fn target(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let entry = app.entry(&id)?;
    let p: PointBody = parse(&body)?;
    entry.submit(Command::Target(p.into()))?;
    Ok(StatusCode::ACCEPTED)
}

async fn path(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let entry = app.entry(&id)?;
    let body: PathBody = parse(&body)?;
    let radius = entry.session.lock().unwrap().spec().cfg.workspace_radius;
    entry.submit(Command::Path(to_path(&body, radius)?))?;
    Ok(StatusCode::ACCEPTED)
}

async fn params(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let entry = app.entry(&id)?;
    let update: ParamUpdate = parse(&body)?;
    entry.submit(Command::Params(update))?;
    Ok(StatusCode::ACCEPTED)
}

async fn pause(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    app.entry(&id)?.submit(Command::Pause)?;
    Ok(StatusCode::ACCEPTED)
}

async fn resume(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    app.entry(&id)?.submit(Command::Resume)?;
    Ok(StatusCode::ACCEPTED)
}

/// Optional body `{x_mm, y_mm}`; without it the particle returns to its start.
async fn reset(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let entry = app.entry(&id)?;
    let p: Option<PointBody> = parse(&body)?;
    entry.submit(Command::Reset(p.map(Vec2::from)))?;
    Ok(StatusCode::ACCEPTED)
}

async fn stream(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let rx = app.entry(&id)?.events.subscribe();
    let lines = futures::stream::unfold((rx, true), |(mut rx, first)| async move {
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let ev = rx.borrow_and_update().clone();
        let mut line = serde_json::to_vec(&ev).expect("state events serialize");
        line.push(b'\n');
        Some((Ok::<_, Infallible>(Bytes::from(line)), (rx, false)))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(lines),
    )
        .into_response())
}

async fn log_csv(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let entry = app.entry(&id)?;
    let csv = entry
        .session
        .lock()
        .unwrap()
        .log()
        .to_csv_string()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

fn presets() -> Vec<ReferencePath> {
    preset_paths(ferromanip::rig::DEFAULT_WORKSPACE_RADIUS_MM)
        .expect("preset paths fit the default workspace")
}

async fn path_names() -> Json<Vec<String>> {
    Json(presets().into_iter().map(|p| p.name).collect())
}

/// Preset path JSON, byte-identical to the shipped path files.
async fn preset(Path(name): Path<String>) -> Result<Response, ApiError> {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    let p = presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no preset path {name}")))?;
    let json = p
        .to_json()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json).into_response())
}

pub fn router(app: AppState) -> Router {
    let static_dir = app.options.static_dir.clone();
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", delete(remove))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/target", post(target))
        .route("/sessions/{id}/path", post(path))
        .route("/sessions/{id}/params", post(params))
        .route("/sessions/{id}/pause", post(pause))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/log.csv", get(log_csv))
        .route("/paths", get(path_names))
        .route("/paths/{name}", get(preset))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    options: ServiceOptions,
) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(options))).await
}
