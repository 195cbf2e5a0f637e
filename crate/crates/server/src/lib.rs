//! HTTP/JSON service around the pipeline. Each session owns one stream's
//! tracker and background model; frames must be posted in order.

use std::collections::HashMap;
use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::{Mutex, RwLock};

use zbs_core::api::{
    CreateSession, ErrorBody, EvaluateRequest, EvaluateResponse, SessionCreated, SessionSummary, SweepRequest,
    SynthRequest, SynthResponse, GtRuns,
};
use zbs_core::bgmodel::BackgroundEntry;
use zbs_core::evaluator::{accumulate, aggregate, EvalCounts, VideoCounts};
use zbs_core::pipeline::{FrameOutput, Pipeline, PipelineError};
use zbs_core::stream::{parse_all, FrameDetections};
use zbs_core::sweep::{sweep, SweepRow};
use zbs_core::synth::{generate, preset};
use zbs_core::tracker::{TrackRecord, TrackerError};

const BODY_LIMIT: usize = 512 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl ToString) -> Self {
        Self {
            status,
            kind,
            message: message.to_string(),
        }
    }

    fn parse(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "parse", message)
    }

    fn invalid(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::parse(r.body_text())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "config", e),
            PipelineError::Tracker(TrackerError::OutOfOrder { .. }) => Self::new(StatusCode::CONFLICT, "invalid", e),
            _ => Self::invalid(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            kind: self.kind.to_owned(),
            error: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Session {
    pipeline: Pipeline,
    frames_processed: u64,
    last_frame: Option<u64>,
}

impl Session {
    fn process(&mut self, frame: &FrameDetections) -> Result<FrameOutput, ApiError> {
        let out = self.pipeline.process(frame)?;
        self.frames_processed += 1;
        self.last_frame = Some(frame.frame);
        Ok(out)
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<u64, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    async fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().await.get(&id).cloned().ok_or(ApiError::not_found(id))
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_summary).delete(delete_session))
        .route("/v1/sessions/{id}/frames", post(post_frame))
        .route("/v1/sessions/{id}/batch", post(post_batch))
        .route("/v1/sessions/{id}/model", get(model))
        .route("/v1/sessions/{id}/tracks", get(tracks))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/synth", post(synth))
        .route("/v1/sweep", post(run_sweep))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(Arc::new(AppState::default()))
}

/// Serve on an already-bound listener until the task is dropped.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Bind to an ephemeral loopback port and serve in the background.
pub async fn spawn_local() -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(addr)
}

pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let Json(req) = body?;
    let pipeline = Pipeline::new(req.header, req.config, req.aod)?;
    let id = state.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    let session = Session {
        pipeline,
        frames_processed: 0,
        last_frame: None,
    };
    state.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    tracing::info!(session = id, "session created");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id })))
}

fn summary(id: u64, s: &Session) -> SessionSummary {
    SessionSummary {
        session_id: id,
        frames_processed: s.frames_processed,
        last_frame: s.last_frame,
        model: s.pipeline.snapshot(),
    }
}

async fn session_summary(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<SessionSummary> {
    let s = state.session(id).await?;
    let s = s.lock().await;
    Ok(Json(summary(id, &s)))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<SessionSummary> {
    let s = state.sessions.write().await.remove(&id).ok_or(ApiError::not_found(id))?;
    let s = s.lock().await;
    tracing::info!(session = id, frames = s.frames_processed, "session closed");
    Ok(Json(summary(id, &s)))
}

async fn post_frame(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    body: Result<Json<FrameDetections>, JsonRejection>,
) -> ApiResult<FrameOutput> {
    let Json(frame) = body?;
    let s = state.session(id).await?;
    let mut s = s.lock().await;
    Ok(Json(s.process(&frame)?))
}

/// Frames are applied in order; on error, frames before the failing one stay
/// applied.
async fn post_batch(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    body: Result<Json<Vec<FrameDetections>>, JsonRejection>,
) -> ApiResult<Vec<FrameOutput>> {
    let Json(frames) = body?;
    let s = state.session(id).await?;
    let mut s = s.lock().await;
    let out = frames.iter().map(|f| s.process(f)).collect::<Result<Vec<_>, _>>()?;
    Ok(Json(out))
}

async fn model(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Vec<BackgroundEntry>> {
    let s = state.session(id).await?;
    let s = s.lock().await;
    Ok(Json(s.pipeline.snapshot()))
}

async fn tracks(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Vec<TrackRecord>> {
    let s = state.session(id).await?;
    let s = s.lock().await;
    Ok(Json(s.pipeline.track_records()))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn evaluate_videos(req: EvaluateRequest) -> Result<EvaluateResponse, ApiError> {
    let mut counts = Vec::with_capacity(req.videos.len());
    for v in req.videos {
        let mut c = EvalCounts::default();
        for f in v.frames.iter().filter(|f| f.frame >= v.first_frame) {
            let gt = f
                .gt
                .to_gt()
                .map_err(|e| ApiError::invalid(format!("{} frame {}: {e}", v.name, f.frame)))?;
            accumulate(&gt, &f.pred, &mut c).map_err(|e| ApiError::invalid(format!("{} frame {}: {e}", v.name, f.frame)))?;
        }
        counts.push(VideoCounts {
            name: v.name,
            category: v.category,
            counts: c,
        });
    }
    let report = aggregate(&counts);
    Ok(EvaluateResponse { counts, report })
}

async fn evaluate(body: Result<Json<EvaluateRequest>, JsonRejection>) -> ApiResult<EvaluateResponse> {
    let Json(req) = body?;
    blocking(move || evaluate_videos(req)).await.map(Json)
}

async fn synth(body: Result<Json<SynthRequest>, JsonRejection>) -> ApiResult<SynthResponse> {
    let Json(req) = body?;
    blocking(move || {
        let mut scenario = match (req.preset, req.scenario) {
            (Some(name), None) => preset(&name, req.seed).map_err(ApiError::invalid)?,
            (None, Some(s)) => s,
            _ => return Err(ApiError::invalid("give exactly one of `preset` or `scenario`")),
        };
        scenario.seed = req.seed;
        let out = generate(&scenario).map_err(ApiError::invalid)?;
        Ok(SynthResponse {
            stream: String::from_utf8(out.stream_bytes()).map_err(ApiError::internal)?,
            gt: out.gt.iter().map(GtRuns::from_gt).collect(),
            manifest: out.manifest,
        })
    })
    .await
    .map(Json)
}

async fn run_sweep(body: Result<Json<SweepRequest>, JsonRejection>) -> ApiResult<Vec<SweepRow>> {
    let Json(req) = body?;
    blocking(move || {
        req.config
            .validate()
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "config", e))?;
        let (header, frames) = parse_all(Cursor::new(req.stream.as_bytes())).map_err(ApiError::parse)?;
        let gt = req
            .gt
            .map(|g| g.iter().map(GtRuns::to_gt).collect::<Result<Vec<_>, _>>())
            .transpose()
            .map_err(ApiError::invalid)?;
        sweep(&header, &frames, &req.config, &req.grid, gt.as_deref(), req.first_frame).map_err(ApiError::invalid)
    })
    .await
    .map(Json)
}
