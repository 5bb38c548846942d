//! Session registry, request handlers and the router.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use diffx_core::backend::{GeneratedImage, GenerationBackend, MockBackend, RemoteBackend};
use diffx_core::embedding::Encoders;
use diffx_core::netsim::{aggregate, SessionSummary};
use diffx_core::pipeline::{Pipeline, PipelineConfig, Predictors, SimulatedCosts, Timing};
use diffx_core::predictor::load_weights;
use diffx_core::replay::{round_seed, Scenario};
use diffx_core::{
    transition, CandidateSet, Error, EventKind, ImageRef, LatencyBreakdown, Phase, SessionEvent,
    SessionState, Tier,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;

use crate::config::{ServiceConfig, TimingMode};
use crate::log::{read_log, EventLog, LogEntry, LogEvent};
use crate::store::ImageStore;

pub const LOG_FILE: &str = "events.jsonl";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug)]
pub enum ApiError {
    UnknownSession(String),
    BadRequest(String),
    Core(Error),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::UnknownSession(id) => (
                StatusCode::NOT_FOUND,
                "unknown_session",
                format!("no session '{id}'"),
            ),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Core(e) => {
                let (status, code) = match &e {
                    Error::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
                    Error::EmptyText => (StatusCode::BAD_REQUEST, "empty_text"),
                    Error::Timeout => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
                    Error::BackendUnavailable(_) => {
                        (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable")
                    }
                    Error::ProtocolError(_) | Error::BackendFailure(_) => {
                        (StatusCode::BAD_GATEWAY, "backend_failure")
                    }
                    _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
                };
                (status, code, e.to_string())
            }
        };
        (
            status,
            Json(ErrorBody {
                error: code,
                message,
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

struct Session {
    state: SessionState,
    /// Latest image of the session, kept so the next round can edit it.
    draft: Option<GeneratedImage>,
}

type SessionCell = Arc<AsyncMutex<Session>>;

pub struct AppState {
    pipeline: Pipeline,
    sessions: Mutex<BTreeMap<String, SessionCell>>,
    log: Mutex<EventLog>,
    images: ImageStore,
    seed: u64,
    next_id: AtomicU64,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn backend(selector: &str, tier: Tier, timeout: Duration) -> Arc<dyn GenerationBackend> {
    match selector {
        "mock" => Arc::new(match tier {
            Tier::Edge => MockBackend::edge(),
            Tier::Cloud => MockBackend::cloud(),
        }),
        url => Arc::new(RemoteBackend::new(url, timeout)),
    }
}

/// Builds the pipeline a config describes: backends, weights and timing.
pub fn build_pipeline(config: &ServiceConfig) -> diffx_core::Result<Pipeline> {
    config.validate()?;
    let predictors = match (&config.edge_weights, &config.cloud_weights) {
        (Some(e), Some(c)) => Some(Predictors {
            edge: load_weights(e)?,
            cloud: load_weights(c)?,
        }),
        _ => None,
    };
    let timeout = Duration::from_secs_f64(config.backend_timeout_s);
    let timing = match config.timing {
        TimingMode::Measured => Timing::Measured,
        TimingMode::Simulated => Timing::Simulated(SimulatedCosts::default()),
    };
    Pipeline::new(
        PipelineConfig {
            grid: CandidateSet::default(),
            base_steps_edge: config.base_steps_edge,
            base_steps_cloud: config.base_steps_cloud,
            t_max: diffx_core::scheduler::DEFAULT_T_MAX,
            predictor_enabled: config.predictor_enabled,
            fixed_strength: config.fixed_strength,
            network: config.network(),
        },
        timing,
        Encoders::default(),
        backend(&config.edge_backend, Tier::Edge, timeout),
        backend(&config.cloud_backend, Tier::Cloud, timeout),
        predictors,
    )
}

/// Applies one persisted entry to the in-memory registry.
fn apply_entry(
    sessions: &mut BTreeMap<String, SessionState>,
    entry: LogEntry,
) -> diffx_core::Result<()> {
    let corrupt =
        |why: &str| Error::InvalidConfig(format!("event log: {why} for session {}", entry.session));
    if entry.event == LogEvent::Create {
        sessions.insert(
            entry.session.clone(),
            SessionState::new(entry.session.clone()),
        );
        return Ok(());
    }
    let state = sessions
        .get(&entry.session)
        .ok_or_else(|| corrupt("event before create"))?;
    let next = match (entry.event, entry.record) {
        (LogEvent::Prompt, Some(record)) => transition(
            state,
            SessionEvent::SubmitPrompt {
                prompt: record.prompt.clone(),
                image: record
                    .image
                    .clone()
                    .ok_or_else(|| corrupt("record without image"))?,
                record,
            },
        )?,
        (LogEvent::Finalize, Some(record)) => {
            let refining = transition(state, SessionEvent::Finalize)?;
            transition(
                &refining,
                SessionEvent::CloudDone {
                    image: record
                        .image
                        .clone()
                        .ok_or_else(|| corrupt("record without image"))?,
                    record,
                },
            )?
        }
        (LogEvent::Close, _) => transition(state, SessionEvent::Close)?,
        _ => return Err(corrupt("missing record")),
    };
    sessions.insert(entry.session, next);
    Ok(())
}

impl AppState {
    /// Opens (or creates) the data directory and replays its event log.
    pub fn open(pipeline: Pipeline, data_dir: &Path, seed: u64) -> diffx_core::Result<Arc<Self>> {
        std::fs::create_dir_all(data_dir)?;
        let images = ImageStore::open(data_dir.join(IMAGE_DIR))?;
        let log_path = data_dir.join(LOG_FILE);
        let mut states = BTreeMap::new();
        for entry in read_log(&log_path)? {
            apply_entry(&mut states, entry)?;
        }
        let count = states.len() as u64;
        let mut sessions = BTreeMap::new();
        for (id, state) in states {
            let draft = match &state.current_image {
                Some(ImageRef(d)) => Some(images.load(d)?),
                None => None,
            };
            sessions.insert(id, Arc::new(AsyncMutex::new(Session { state, draft })));
        }
        Ok(Arc::new(AppState {
            pipeline,
            sessions: Mutex::new(sessions),
            log: Mutex::new(EventLog::open(log_path)?),
            images,
            seed,
            next_id: AtomicU64::new(count),
        }))
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    fn cell(&self, id: &str) -> ApiResult<SessionCell> {
        self.sessions
            .lock()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn append(
        &self,
        session: &str,
        event: LogEvent,
        record: Option<diffx_core::RoundRecord>,
    ) -> diffx_core::Result<()> {
        self.log.lock().expect("log lock").append(&LogEntry {
            ts: now(),
            session: session.to_string(),
            event,
            record,
        })
    }

    pub fn create_session(&self) -> diffx_core::Result<String> {
        // Holding the registry lock keeps ids and log order consistent.
        let mut sessions = self.sessions.lock().expect("registry lock");
        let n = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("s{n:06}");
        self.append(&id, LogEvent::Create, None)?;
        sessions.insert(
            id.clone(),
            Arc::new(AsyncMutex::new(Session {
                state: SessionState::new(id.clone()),
                draft: None,
            })),
        );
        Ok(id)
    }

    fn submit(&self, session: &mut Session, prompt: String) -> diffx_core::Result<RoundResponse> {
        let state = &session.state;
        if !matches!(state.phase, Phase::Created | Phase::PreviewReady) {
            return Err(Error::IllegalTransition {
                from: state.phase,
                event: EventKind::SubmitPrompt,
            });
        }
        let previous = match (state.phase, &session.draft) {
            (Phase::PreviewReady, Some(d)) => Some((state.current_prompt.as_str(), d)),
            _ => None,
        };
        let seed = round_seed(self.seed, &state.session_id, state.round_index as usize);
        let out = self.pipeline.preview(previous, &prompt, seed)?;
        let digest = self.images.put(&out.image)?;
        let next = transition(
            state,
            SessionEvent::SubmitPrompt {
                prompt,
                image: ImageRef(digest),
                record: out.record,
            },
        )?;
        let record = next.history.last().expect("just pushed").clone();
        self.append(&next.session_id, LogEvent::Prompt, Some(record))?;
        session.state = next;
        session.draft = Some(out.image);
        Ok(RoundResponse::from_state(&session.state))
    }

    fn finalize(&self, session: &mut Session) -> diffx_core::Result<RoundResponse> {
        let before = session.state.clone();
        let refining = transition(&before, SessionEvent::Finalize)?;
        let draft = session
            .draft
            .as_ref()
            .expect("preview-ready sessions have a draft");
        session.state = refining;
        let result = (|| {
            let seed = round_seed(self.seed, &before.session_id, before.round_index as usize);
            let out = self
                .pipeline
                .finalize(&before.current_prompt, draft, seed)?;
            let digest = self.images.put(&out.image)?;
            let done = transition(
                &session.state,
                SessionEvent::CloudDone {
                    image: ImageRef(digest),
                    record: out.record,
                },
            )?;
            let record = done.history.last().expect("just pushed").clone();
            self.append(&done.session_id, LogEvent::Finalize, Some(record))?;
            Ok((done, out.image))
        })();
        match result {
            Ok((done, image)) => {
                session.state = done;
                session.draft = Some(image);
                Ok(RoundResponse::from_state(&session.state))
            }
            Err(e) => {
                session.state = before;
                Err(e)
            }
        }
    }

    /// Per-session summaries of every session that reached the cloud.
    pub async fn summaries(&self) -> Vec<SessionSummary> {
        let cells: Vec<SessionCell> = self
            .sessions
            .lock()
            .expect("registry lock")
            .values()
            .cloned()
            .collect();
        let mut out = Vec::new();
        for cell in cells {
            let s = cell.lock().await;
            let history = &s.state.history;
            let Some(cloud) = history.iter().find(|r| r.tier == Tier::Cloud) else {
                continue;
            };
            let tag = Scenario::DiffusionX.tag(cloud.predicted_strength.is_some());
            let prompts = history.iter().filter(|r| r.tier == Tier::Edge).count();
            out.push(SessionSummary::from_records(&tag, prompts, history));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResponse {
    pub session_id: String,
    pub phase: Phase,
    pub round_index: u32,
    pub tier: Tier,
    pub image: String,
    pub image_url: String,
    pub predicted_strength: Option<f64>,
    pub strength_used: Option<f64>,
    pub steps: u32,
    pub latency: LatencyBreakdown,
}

impl RoundResponse {
    fn from_state(state: &SessionState) -> Self {
        let r = state.history.last().expect("round recorded");
        let image = r.image.clone().map(|i| i.0).unwrap_or_default();
        RoundResponse {
            session_id: state.session_id.clone(),
            phase: state.phase,
            round_index: r.round_index,
            tier: r.tier,
            image_url: format!("/images/{image}"),
            image,
            predicted_strength: r.predicted_strength.map(|s| s.value()),
            strength_used: r.strength_used.map(|s| s.value()),
            steps: r.steps_executed,
            latency: r.latency,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct PromptRequest {
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> diffx_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Core(Error::BackendFailure(format!("worker panicked: {e}"))))?
        .map_err(ApiError::from)
}

async fn create(State(app): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let app2 = app.clone();
    let session_id = blocking(move || app2.create_session()).await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id })))
}

async fn prompt(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PromptRequest>,
) -> ApiResult<Json<RoundResponse>> {
    if req.prompt.trim().is_empty() {
        return Err(ApiError::BadRequest("prompt is empty".into()));
    }
    // The session mutex is fair, so queued requests run in arrival order.
    let mut guard = app.cell(&id)?.lock_owned().await;
    let app2 = app.clone();
    blocking(move || app2.submit(&mut guard, req.prompt))
        .await
        .map(Json)
}

async fn finalize(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<RoundResponse>> {
    let mut guard = app.cell(&id)?.lock_owned().await;
    let app2 = app.clone();
    blocking(move || app2.finalize(&mut guard)).await.map(Json)
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionState>> {
    let cell = app.cell(&id)?;
    let s = cell.lock().await;
    Ok(Json(s.state.clone()))
}

async fn get_image(
    State(app): State<Arc<AppState>>,
    UrlPath(digest): UrlPath<String>,
) -> ApiResult<Response> {
    let digest = digest.trim_end_matches(".png").to_string();
    let app2 = app.clone();
    let d = digest.clone();
    match blocking(move || app2.images.bytes(&d)).await? {
        Some(bytes) => Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response()),
        None => Ok((
            StatusCode::NOT_FOUND,
            Json(ErrorBody {
                error: "unknown_image",
                message: format!("no image '{digest}'"),
            }),
        )
            .into_response()),
    }
}

async fn metrics(State(app): State<Arc<AppState>>) -> ApiResult<Response> {
    let report = aggregate(&app.summaries().await, None)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        report.to_json(),
    )
        .into_response())
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/prompt", post(prompt))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/images/{digest}", get(get_image))
        .route("/metrics", get(metrics))
        .with_state(app)
}
