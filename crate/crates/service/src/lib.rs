//! Single-tenant HTTP service over scenario documents and live meal sessions.
//!
//! ```text
//! GET    /v1/{collection}                 list ids and versions
//! GET    /v1/{collection}/{id}            canonical document, ETag "N"
//! PUT    /v1/{collection}/{id}            validate, store as version N+1
//! DELETE /v1/{collection}/{id}
//! POST   /v1/sessions                     {"scenario_id": ...}
//! GET    /v1/sessions/{id}
//! POST   /v1/sessions/{id}/choice         {"item": ...}
//! ```
//!
//! Collections are `scenarios`, `workflows` and `blocks`. Writes to an
//! existing document need `If-Match` with its current version; `If-Match: "0"`
//! asserts the document does not exist yet.

mod import;
mod session;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use sparcs_core::harness::{parse_scenario_document, FeedingSetup, OnlineLearner, Scenario};
use sparcs_core::workflow::Diagnostic;
use sparcs_core::{parse_building_blocks, parse_workflow, to_canonical_string};

pub use import::{import_bundled, ImportError};
pub use session::{ChoiceError, HistoryEntry, MealSession, SessionStatus, SessionView};
pub use store::{is_valid_id, Collection, Document, Expect, Store, StoreError};

pub const JSON_CONTENT_TYPE: &str = "application/json; charset=utf-8";

/// Learner of one stored scenario version, shared by its sessions.
#[derive(Clone)]
struct LearnerSlot {
    scenario_version: u64,
    learner: OnlineLearner,
}

type Shared<T> = Arc<tokio::sync::Mutex<T>>;

pub struct AppState {
    store: Store,
    learner_seed: u64,
    sessions: Mutex<HashMap<String, Shared<MealSession>>>,
    learners: Mutex<HashMap<String, Shared<Option<LearnerSlot>>>>,
    session_counter: AtomicU64,
}

impl AppState {
    /// `learner_seed` seeds the simulated corpus and training of every
    /// scenario learner.
    pub fn new(store: Store, learner_seed: u64) -> Self {
        Self {
            store,
            learner_seed,
            sessions: Mutex::default(),
            learners: Mutex::default(),
            session_counter: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn learner_slot(&self, scenario_id: &str) -> Shared<Option<LearnerSlot>> {
        let mut learners = self.learners.lock().expect("learner table poisoned");
        learners.entry(scenario_id.to_owned()).or_default().clone()
    }

    fn session(&self, id: &str) -> Result<Shared<MealSession>, ApiError> {
        let sessions = self.sessions.lock().expect("session table poisoned");
        sessions.get(id).cloned().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/choice", post(post_choice))
        .route("/v1/{collection}", get(list_documents))
        .route("/v1/{collection}/{id}", get(get_document).put(put_document).delete(delete_document))
        .with_state(state)
}

// ---- responses -------------------------------------------------------------

fn json_response(status: StatusCode, body: String, version: Option<u64>) -> Response {
    let mut response = (status, body).into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(JSON_CONTENT_TYPE));
    if let Some(v) = version {
        headers.insert(header::ETAG, HeaderValue::from_str(&format!("\"{v}\"")).expect("digits are a valid header"));
    }
    response
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub error: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self { status, error: error.into(), diagnostics: Vec::new() }
    }

    fn bad_request(error: impl ToString, diagnostics: &[Diagnostic]) -> Self {
        Self { status: StatusCode::BAD_REQUEST, error: error.to_string(), diagnostics: diagnostics.to_vec() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, to_canonical_string(&self), None)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::PreconditionRequired(_) => StatusCode::PRECONDITION_REQUIRED,
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

// ---- documents -------------------------------------------------------------

fn collection(name: &str) -> Result<Collection, ApiError> {
    Collection::parse(name).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown collection `{name}`")))
}

/// Validates a payload and returns its canonical form.
pub fn canonicalize(collection: Collection, id: &str, body: &str) -> Result<String, ApiError> {
    match collection {
        Collection::Scenarios => parse_scenario_document(id, body)
            .map(|s| s.to_document())
            .map_err(|e| ApiError::bad_request(&e, e.diagnostics())),
        Collection::Workflows => {
            parse_workflow(body).map(|w| w.to_canonical()).map_err(|e| ApiError::bad_request(&e, e.diagnostics()))
        }
        Collection::Blocks => {
            parse_building_blocks(body).map(|b| b.to_canonical()).map_err(|e| ApiError::bad_request(e, &[]))
        }
    }
}

/// Parses an `If-Match` value: a version number, optionally quoted.
fn expectation(headers: &HeaderMap) -> Result<Expect, ApiError> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(Expect::Unconditional);
    };
    value
        .to_str()
        .ok()
        .map(|v| v.trim().trim_start_matches("W/").trim_matches('"'))
        .and_then(|v| v.parse().ok())
        .map(Expect::Version)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "If-Match must be a document version"))
}

#[derive(Serialize)]
struct ListEntry {
    id: String,
    version: u64,
}

#[derive(Serialize)]
struct Listing {
    collection: &'static str,
    items: Vec<ListEntry>,
}

async fn list_documents(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let c = collection(&name)?;
    let items = state.store.list(c)?.into_iter().map(|(id, version)| ListEntry { id, version }).collect();
    Ok(json_response(StatusCode::OK, to_canonical_string(&Listing { collection: c.as_str(), items }), None))
}

async fn get_document(
    State(state): State<Arc<AppState>>,
    Path((name, id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let doc = state.store.get(collection(&name)?, &id)?;
    Ok(json_response(StatusCode::OK, doc.body, Some(doc.version)))
}

async fn put_document(
    State(state): State<Arc<AppState>>,
    Path((name, id)): Path<(String, String)>,
    headers: HeaderMap,
    body: String,
) -> Result<Response, ApiError> {
    let c = collection(&name)?;
    if !is_valid_id(&id) {
        return Err(StoreError::InvalidId(id).into());
    }
    let expect = expectation(&headers)?;
    let canonical = canonicalize(c, &id, &body)?;
    let version = state.store.put(c, &id, &canonical, expect)?;
    Ok(json_response(StatusCode::OK, canonical, Some(version)))
}

async fn delete_document(
    State(state): State<Arc<AppState>>,
    Path((name, id)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let c = collection(&name)?;
    state.store.delete(c, &id, expectation(&headers)?)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

// ---- sessions --------------------------------------------------------------

fn parse_json<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::bad_request(e, &[]))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    scenario_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Choice {
    item: String,
}

fn internal(e: impl ToString) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn session_response(status: StatusCode, session: &MealSession) -> Response {
    json_response(status, to_canonical_string(&session.view()), None)
}

fn stored_scenario(state: &AppState, id: &str) -> Result<(Scenario, u64), ApiError> {
    let doc = state.store.get(Collection::Scenarios, id)?;
    let scenario = parse_scenario_document(id, &doc.body).map_err(internal)?;
    Ok((scenario, doc.version))
}

async fn build_learner(setup: FeedingSetup, seed: u64) -> Result<OnlineLearner, ApiError> {
    tokio::task::spawn_blocking(move || OnlineLearner::new(&setup, seed)).await.map_err(internal)?.map_err(internal)
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> Result<Response, ApiError> {
    let request: NewSession = parse_json(&body)?;
    let (scenario, version) = stored_scenario(&state, &request.scenario_id)?;
    let Some(setup) = scenario.feeding else {
        let msg = format!("scenario `{}` has no meal", scenario.id);
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg));
    };
    let slot = state.learner_slot(&scenario.id);
    let model = {
        let mut slot = slot.lock().await;
        if slot.as_ref().is_none_or(|s| s.scenario_version != version) {
            let learner = build_learner(setup.clone(), state.learner_seed).await?;
            *slot = Some(LearnerSlot { scenario_version: version, learner });
        }
        slot.as_ref().expect("filled above").learner.model.clone()
    };
    let n = state.session_counter.fetch_add(1, Ordering::Relaxed) + 1;
    let id = format!("s{n}");
    let session = MealSession::new(id.clone(), scenario.id, version, setup.meal, model).map_err(internal)?;
    let response = session_response(StatusCode::CREATED, &session);
    state.sessions.lock().expect("session table poisoned").insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    Ok(response)
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let session = session.lock().await;
    Ok(session_response(StatusCode::OK, &session))
}

async fn post_choice(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> Result<Response, ApiError> {
    let choice: Choice = parse_json(&body)?;
    let session = state.session(&id)?;
    let mut session = session.lock().await;
    let complete = session.choose(&choice.item).map_err(|e| match e {
        ChoiceError::Complete => ApiError::new(StatusCode::CONFLICT, format!("session `{id}` is complete")),
        ChoiceError::Exhausted(item) => ApiError::new(StatusCode::CONFLICT, format!("no `{item}` left")),
        ChoiceError::UnknownItem(item) => {
            ApiError::new(StatusCode::BAD_REQUEST, format!("`{item}` is not in this meal"))
        }
    })?;
    if complete {
        // Later sessions of the same scenario version start from the updated model.
        let slot = state.learner_slot(session.scenario_id());
        let mut slot = slot.lock().await;
        if let Some(current) = slot.as_ref().filter(|s| s.scenario_version == session.scenario_version()) {
            let mut next = current.clone();
            let meal = vec![session.sequence().to_vec()];
            let next = tokio::task::spawn_blocking(move || next.learner.update(&meal).map(|()| next))
                .await
                .map_err(internal)?
                .map_err(internal)?;
            *slot = Some(next);
        }
    }
    Ok(session_response(StatusCode::OK, &session))
}

/// Store location and learner seed of a running service.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub learner_seed: u64,
}

/// Serves `app` on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

/// Opens the store and builds the router state.
pub fn app(config: &ServiceConfig) -> std::io::Result<Router> {
    let store = Store::open(&config.store_dir)?;
    Ok(router(Arc::new(AppState::new(store, config.learner_seed))))
}
