//! HTTP/JSON service for placement-test sessions.
//!
//! The repository is loaded once from an XML directory and read without locks
//! afterwards. Each session sits behind its own async mutex, so answers to one
//! session are applied one at a time while distinct sessions proceed
//! concurrently. Every accepted transition is appended to the session's event
//! log before the response is sent; a session missing from memory (after a
//! restart) is rebuilt from that log on first access. Completed sessions write
//! the learner profile back to its XML file atomically.
//!
//! There is no authentication: `learnerRef` is trusted input.

mod error;
pub mod payload;

use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequest, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use placement_core::engine::{apply_to_profile, replay, Progress, SelectionMode, SessionLog, SessionSpec, TestSession};
use placement_core::ims::{write_profile_atomic, LearnerProfile, Repository, RepositoryError};
use placement_core::irt::{EstimationConfig, IrtError};

pub use error::{ApiError, ErrorCode};
use payload::*;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error(transparent)]
    Config(#[from] IrtError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub repo_dir: PathBuf,
    /// Session logs; `<repo_dir>/sessions` when unset.
    pub sessions_dir: Option<PathBuf>,
    /// Directory served for non-API paths (the UI bundle).
    pub static_dir: Option<PathBuf>,
    pub estimation: EstimationConfig,
}

impl ServerConfig {
    pub fn new(repo_dir: impl Into<PathBuf>) -> Self {
        Self {
            repo_dir: repo_dir.into(),
            sessions_dir: None,
            static_dir: None,
            estimation: EstimationConfig::default(),
        }
    }
}

struct LiveSession {
    session: TestSession,
    /// Number of events already in the log file.
    persisted: usize,
}

type SessionHandle = Arc<tokio::sync::Mutex<LiveSession>>;

pub struct AppState {
    repo: Repository,
    repo_dir: PathBuf,
    log: SessionLog,
    estimation: EstimationConfig,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    profiles: tokio::sync::Mutex<HashMap<String, LearnerProfile>>,
}

impl AppState {
    /// Loads the repository named in `config`. Validation findings are logged,
    /// not fatal: a competence with too few items fails only when a session asks for it.
    pub fn load(config: &ServerConfig) -> Result<Self, ServerError> {
        let repo = Repository::load_dir(&config.repo_dir)?;
        for finding in &repo.validate().findings {
            tracing::warn!(%finding, "repository finding");
        }
        config.estimation.validate()?;
        let sessions_dir = config
            .sessions_dir
            .clone()
            .unwrap_or_else(|| config.repo_dir.join("sessions"));
        std::fs::create_dir_all(&sessions_dir)?;
        let profiles = repo.profiles.iter().map(|p| (p.id.clone(), p.clone())).collect();
        Ok(Self {
            repo,
            repo_dir: config.repo_dir.clone(),
            log: SessionLog::new(sessions_dir),
            estimation: config.estimation,
            sessions: Mutex::new(HashMap::new()),
            profiles: tokio::sync::Mutex::new(profiles),
        })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    /// In-memory session, or one rebuilt from its log.
    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let mut sessions = self.sessions.lock().expect("session map lock poisoned");
        if let Some(handle) = sessions.get(id) {
            return Ok(handle.clone());
        }
        let events = self.log.read(id)?;
        let session = replay(&events, &self.repo)?;
        tracing::info!(session = id, events = events.len(), "resumed session from log");
        let handle = Arc::new(tokio::sync::Mutex::new(LiveSession {
            session,
            persisted: events.len(),
        }));
        sessions.insert(id.to_string(), handle.clone());
        Ok(handle)
    }

    async fn record_outcome(&self, session: &TestSession) -> Result<(), ApiError> {
        let outcome = session.outcome().expect("completed sessions carry an outcome");
        let mut profiles = self.profiles.lock().await;
        let profile = profiles
            .entry(session.learner_ref().to_string())
            .or_insert_with(|| LearnerProfile::new(session.learner_ref()));
        apply_to_profile(outcome, profile)?;
        let path = self.repo.profile_path(&self.repo_dir, &profile.id);
        write_profile_atomic(&path, profile)
            .map_err(|e| ApiError::internal(format!("writing profile {}: {e}", path.display())))
    }
}

/// JSON body extractor whose rejections use the API error shape.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct ApiJson<T>(T);

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/answers", post(submit_answer))
        .route("/api/sessions/{id}/result", get(get_result))
        .route("/api/competences", get(list_competences))
        .route("/api/competences/{id}", get(get_competence))
        .route("/api/learners/{id}", get(get_learner))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `router` on `listener` until `shutdown` resolves; in-flight requests finish first.
pub async fn serve(listener: TcpListener, router: Router, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}

async fn api_not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

async fn create_session(State(state): Shared, ApiJson(req): ApiJson<CreateSession>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let mode = match req.mode.as_deref() {
        None => SelectionMode::default(),
        Some(m) => SelectionMode::parse(m).ok_or_else(|| ApiError::validation("mode", format!("unknown selection mode '{m}'")))?,
    };
    let competence = state
        .repo
        .competence(&req.competence_ref)
        .ok_or_else(|| ApiError::not_found("competence", &req.competence_ref))?;
    if !state.profiles.lock().await.contains_key(&req.learner_ref) {
        return Err(ApiError::not_found("learner", &req.learner_ref));
    }
    let spec = SessionSpec {
        session_id: uuid::Uuid::new_v4().simple().to_string(),
        learner_ref: req.learner_ref,
        competence_ref: req.competence_ref,
        mode,
        config: state.estimation,
        shuffle_seed: req.shuffle_seed,
    };
    let session = TestSession::start(spec, competence, &state.repo.items, Utc::now())?;
    let persisted = state.log.append(&session, 0)?;
    let body = SessionCreated {
        session_id: session.id().to_string(),
        total_questions: session.total_questions(),
        first_question: QuestionPayload::current(&session).expect("a new session has a question"),
    };
    state
        .sessions
        .lock()
        .expect("session map lock poisoned")
        .insert(body.session_id.clone(), Arc::new(tokio::sync::Mutex::new(LiveSession { session, persisted })));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = state.session(&id)?;
    let live = handle.lock().await;
    Ok(Json(SessionView::new(&live.session)))
}

async fn submit_answer(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<SubmitAnswer>,
) -> Result<Json<AnswerAccepted>, ApiError> {
    let handle = state.session(&id)?;
    let mut live = handle.lock().await;
    let progress = live.session.submit_answer(&req.item_id, &req.choice_id, Utc::now())?;
    live.persisted = state.log.append(&live.session, live.persisted)?;
    Ok(Json(match progress {
        Progress::Next(_) => AnswerAccepted::Next {
            next_question: QuestionPayload::current(&live.session).expect("session in progress"),
        },
        Progress::Completed => {
            state.record_outcome(&live.session).await?;
            AnswerAccepted::Completed { completed: true }
        }
    }))
}

async fn get_result(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionResult>, ApiError> {
    let handle = state.session(&id)?;
    let live = handle.lock().await;
    let outcome = live.session.outcome().ok_or_else(|| {
        ApiError::new(
            ErrorCode::InvalidState,
            format!(
                "session '{id}' is in progress ({} of {} answered)",
                live.session.cursor(),
                live.session.total_questions()
            ),
        )
    })?;
    Ok(Json(SessionResult::new(&id, outcome)))
}

async fn list_competences(State(state): Shared) -> Json<Vec<CompetenceSummary>> {
    Json(state.repo.competences.iter().map(CompetenceSummary::from).collect())
}

async fn get_competence(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<CompetenceView>, ApiError> {
    let c = state.repo.competence(&id).ok_or_else(|| ApiError::not_found("competence", &id))?;
    Ok(Json(CompetenceView::new(c, state.repo.items_for(&id).len())))
}

async fn get_learner(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<LearnerView>, ApiError> {
    let profiles = state.profiles.lock().await;
    let p = profiles.get(&id).ok_or_else(|| ApiError::not_found("learner", &id))?;
    Ok(Json(LearnerView::from(p)))
}
