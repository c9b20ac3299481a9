//! JSON over HTTP in front of a [`LiveSystem`]: user logins, request
//! submission with polling, booking selection with idempotency keys,
//! history, zone rosters and guesthouse staff updates.

mod error;
mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use guestnet::agents::{verify_credential, BookingOutcome, LiveSystem, SearchState, SelectError, SubmitError};
use guestnet::domain::{GuesthouseId, ProposalId, RequestDraft, RequestId, UserId, ZoneId};
use guestnet::protocol::Choice;
use guestnet::store::{AdminPrincipal, CalendarEntry, GuesthouseUpdate, ProfileUpdate, StoreError};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::OnceCell;
use tower_http::services::{ServeDir, ServeFile};

pub use error::ApiError;
pub use session::{Principal, Sessions};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub session_ttl: Duration,
    /// How long a select waits for the booking outcome.
    pub select_timeout: Duration,
    /// Upper bound on `wait_ms` when polling a classification.
    pub max_poll: Duration,
    /// Directory with the web front end, served for non-API paths.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_ttl: Duration::from_secs(3600),
            select_timeout: Duration::from_secs(30),
            max_poll: Duration::from_secs(30),
            static_dir: None,
        }
    }
}

type Reply = (StatusCode, Value);
type IdempotencyKey = (UserId, RequestId, String);
type Replay = (ProposalId, Arc<OnceCell<Reply>>);

struct Inner {
    system: Arc<LiveSystem>,
    sessions: Sessions,
    replays: Mutex<HashMap<IdempotencyKey, Replay>>,
    config: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn sessions(&self) -> &Sessions {
        &self.0.sessions
    }

    pub fn system(&self) -> &Arc<LiveSystem> {
        &self.0.system
    }
}

/// Builds the router. The system must outlive it.
pub fn app(system: Arc<LiveSystem>, config: ServiceConfig) -> Router {
    let state = AppState(Arc::new(Inner {
        system,
        sessions: Sessions::new(config.session_ttl),
        replays: Mutex::default(),
        config: config.clone(),
    }));
    let api = Router::new()
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/requests", post(submit))
        .route("/api/requests/{id}", get(request_view))
        .route("/api/requests/{id}/classification", get(classification))
        .route("/api/requests/{id}/select", post(select))
        .route("/api/users/me/history", get(history))
        .route("/api/zones", get(zones))
        .route("/api/zones/{zone}/guesthouses", get(roster))
        .route("/api/guesthouses/{id}", get(guesthouse))
        .route("/api/guesthouses/{id}/calendar", put(put_calendar))
        .route("/api/guesthouses/{id}/profile", put(put_profile))
        .route(
            "/api/{*rest}",
            axum::routing::any(|| async { ApiError::not_found("no such endpoint") }),
        );
    let api = match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => api.fallback(|| async { ApiError::not_found("no such page") }),
    };
    api.with_state(state)
}

/// The authenticated caller.
pub struct Auth(pub Principal, String);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        let principal = state
            .sessions()
            .resolve(token)
            .ok_or_else(|| ApiError::unauthorized("unknown or expired session"))?;
        Ok(Auth(principal, token.to_owned()))
    }
}

impl Auth {
    fn user(&self) -> Result<&UserId, ApiError> {
        match &self.0 {
            Principal::User { user_id } => Ok(user_id),
            Principal::Admin { .. } => Err(ApiError::forbidden("this needs a user session")),
        }
    }

    fn admin_of(&self, id: &GuesthouseId) -> Result<AdminPrincipal, ApiError> {
        match &self.0 {
            Principal::Admin { guesthouse_id } if guesthouse_id == id => Ok(AdminPrincipal {
                guesthouse_id: guesthouse_id.clone(),
            }),
            _ => Err(ApiError::forbidden(format!("this session may not manage {id}"))),
        }
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Login {
    #[serde(default)]
    user_id: Option<UserId>,
    #[serde(default)]
    guesthouse_id: Option<GuesthouseId>,
    password: String,
}

async fn login(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let login: Login = parse(&body)?;
    let topology = state.system().topology();
    let (principal, stored) = match (login.user_id, login.guesthouse_id) {
        (Some(user_id), None) => {
            let stored = topology.user(&user_id).and_then(|u| u.credential_hash.clone());
            (Principal::User { user_id }, stored)
        }
        (None, Some(guesthouse_id)) => {
            let stored = topology
                .guesthouse(&guesthouse_id)
                .and_then(|g| g.admin_credential_hash.clone());
            (Principal::Admin { guesthouse_id }, stored)
        }
        _ => return Err(ApiError::invalid("give exactly one of user_id and guesthouse_id")),
    };
    if !stored.is_some_and(|s| verify_credential(&s, &login.password)) {
        return Err(ApiError::unauthorized("wrong credentials"));
    }
    let token = state.sessions().issue(principal.clone());
    Ok(Json(json!({
        "token": token,
        "principal": principal,
        "expires_in": state.sessions().ttl().as_secs(),
    })))
}

async fn logout(State(state): State<AppState>, auth: Auth) -> StatusCode {
    state.sessions().revoke(&auth.1);
    StatusCode::NO_CONTENT
}

async fn submit(State(state): State<AppState>, auth: Auth, body: Bytes) -> Result<Response, ApiError> {
    let user = auth.user()?;
    let draft: RequestDraft = parse(&body)?;
    let rid = state.system().submit(user, draft).map_err(|e| match e {
        SubmitError::UnknownUser(_) => ApiError::forbidden(e.to_string()),
        SubmitError::UnknownZone(_) | SubmitError::Invalid(_) => ApiError::invalid(e.to_string()),
        SubmitError::Unavailable => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    })?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "request_id": rid }))).into_response())
}

async fn request_view(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let view = state
        .system()
        .view(auth.user()?, &RequestId::from(id))
        .ok_or_else(|| ApiError::not_found("no such request"))?;
    Ok(Json(json!(view)))
}

#[derive(Deserialize)]
struct Poll {
    #[serde(default)]
    wait_ms: u64,
}

async fn classification(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    Query(poll): Query<Poll>,
) -> Result<Json<Value>, ApiError> {
    let user = auth.user()?;
    let rid = RequestId::from(id);
    let wait = Duration::from_millis(poll.wait_ms).min(state.0.config.max_poll);
    let view = if wait.is_zero() {
        state.system().view(user, &rid)
    } else {
        state.system().wait_searched(user, &rid, wait).await
    }
    .ok_or_else(|| ApiError::not_found("no such request"))?;
    Ok(Json(match view.state {
        SearchState::Pending => json!({ "status": "pending" }),
        SearchState::Rejected => json!({ "status": "rejected", "reason": view.reason }),
        SearchState::Classified => json!({ "status": "classified", "classification": view.classification }),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Selection {
    proposal_id: ProposalId,
}

async fn select(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let user = auth.user()?.clone();
    let rid = RequestId::from(id);
    let selection: Selection = parse(&body)?;
    let key = headers
        .get("idempotency-key")
        .map(|v| v.to_str().map(str::to_owned))
        .transpose()
        .map_err(|_| ApiError::invalid("idempotency key must be visible ASCII"))?;
    let Some(key) = key else {
        let (status, body) = book(&state, &user, &rid, selection.proposal_id).await;
        return Ok((status, Json(body)).into_response());
    };
    let slot = (user.clone(), rid.clone(), key);
    let cell = {
        let mut replays = state.0.replays.lock();
        let (pid, cell) = replays
            .entry(slot.clone())
            .or_insert_with(|| (selection.proposal_id.clone(), Arc::default()));
        if *pid != selection.proposal_id {
            return Err(ApiError::invalid("idempotency key already used for another proposal"));
        }
        Arc::clone(cell)
    };
    let (status, body) = cell
        .get_or_init(|| book(&state, &user, &rid, selection.proposal_id))
        .await
        .clone();
    if status.is_server_error() {
        // Let a retry with the same key try again.
        state.0.replays.lock().remove(&slot);
    }
    Ok((status, Json(body)).into_response())
}

/// Hands a selection to the user's personal agent and waits for the result.
async fn book(state: &AppState, user: &UserId, rid: &RequestId, pid: ProposalId) -> Reply {
    let system = state.system();
    let Some(view) = system.view(user, rid) else {
        return reply(ApiError::not_found("no such request"));
    };
    match view.state {
        SearchState::Pending => return reply(ApiError::conflict("the classification is not ready")),
        SearchState::Rejected => return reply(ApiError::conflict("the request was rejected")),
        SearchState::Classified => {}
    }
    if !view
        .classification
        .as_ref()
        .is_some_and(|c| c.get(pid.as_str()).is_some())
    {
        return reply(ApiError::not_found(format!("no proposal {pid} for this request")));
    }
    match system
        .select(user, rid, Choice::Proposal(pid), state.0.config.select_timeout)
        .await
    {
        Ok(outcome @ BookingOutcome::Booked { .. }) => (StatusCode::OK, json!(outcome)),
        Ok(outcome @ BookingOutcome::Failed { .. }) => (StatusCode::CONFLICT, json!(outcome)),
        Err(SelectError::Refused(reason)) => (StatusCode::CONFLICT, json!({ "status": "failed", "reason": reason })),
        Err(e @ SelectError::NotFound) => reply(ApiError::not_found(e.to_string())),
        Err(e @ SelectError::NotReady) => reply(ApiError::conflict(e.to_string())),
        Err(e @ SelectError::Timeout) => reply(ApiError::new(StatusCode::GATEWAY_TIMEOUT, e.to_string())),
    }
}

fn reply(e: ApiError) -> Reply {
    (e.status, e.body())
}

async fn history(State(state): State<AppState>, auth: Auth) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(state.system().history(auth.user()?))))
}

async fn zones(State(state): State<AppState>) -> Json<Value> {
    Json(json!(state.system().zones()))
}

async fn roster(State(state): State<AppState>, Path(zone): Path<String>) -> Result<Json<Value>, ApiError> {
    let roster = state
        .system()
        .roster(&ZoneId::from(zone))
        .ok_or_else(|| ApiError::not_found("no such zone"))?;
    Ok(Json(json!(roster.guesthouses)))
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::UnknownGuesthouse(_) => ApiError::not_found(e.to_string()),
        StoreError::Forbidden { .. } => ApiError::forbidden(e.to_string()),
        StoreError::Conflict(_) => ApiError::conflict(e.to_string()),
        StoreError::Invalid(_) => ApiError::invalid(e.to_string()),
        other => {
            tracing::error!(error = %other, "guesthouse update failed");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string())
        }
    }
}

async fn guesthouse(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let id = GuesthouseId::from(id);
    auth.admin_of(&id)?;
    let snapshot = state.system().store().guesthouse_snapshot(&id).map_err(store_error)?;
    Ok(Json(json!(snapshot)))
}

fn update(state: &AppState, auth: &Auth, id: String, update: GuesthouseUpdate) -> Result<Json<Value>, ApiError> {
    let id = GuesthouseId::from(id);
    let principal = auth.admin_of(&id)?;
    let store = state.system().store();
    store.update_guesthouse(&principal, &id, update).map_err(store_error)?;
    Ok(Json(json!(store.guesthouse_snapshot(&id).map_err(store_error)?)))
}

async fn put_calendar(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let entries: Vec<CalendarEntry> = parse(&body)?;
    update(&state, &auth, id, GuesthouseUpdate::Calendar(entries))
}

async fn put_profile(
    State(state): State<AppState>,
    auth: Auth,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let delta: ProfileUpdate = parse(&body)?;
    update(&state, &auth, id, GuesthouseUpdate::Profile(delta))
}
