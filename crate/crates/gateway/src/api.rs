//! HTTP JSON API and the server-sent event stream for the review console.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use aesp_core::crypto::canonical_string;
use aesp_core::identity::AgentId;
use aesp_core::policy::ActionRequest;
use aesp_core::privacy::PrivacyLevel;
use aesp_core::review::{ReviewError, ReviewResponse, ReviewStatus, ReviewVerdict};
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::pipeline::{Gateway, GatewayError};

/// A canonical-JSON response body.
pub struct Canon<T>(pub StatusCode, pub T);

impl<T: Serialize> IntoResponse for Canon<T> {
    fn into_response(self) -> Response {
        match canonical_string(&self.1) {
            Ok(body) => (self.0, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
            Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "SERIALIZE", e.to_string()).into_response(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = canonical_string(&self.body).unwrap_or_default();
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

pub fn review_status_code(e: &ReviewError) -> StatusCode {
    match e {
        ReviewError::UnknownRequest(_) => StatusCode::NOT_FOUND,
        ReviewError::AlreadyResolved(_) | ReviewError::PastDeadline | ReviewError::AgentFrozen(_) => {
            StatusCode::CONFLICT
        }
        ReviewError::TierViolation | ReviewError::InvalidResponse(_) | ReviewError::InvalidDeadline => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ReviewError::Expired => StatusCode::CONFLICT,
        ReviewError::Storage(_) | ReviewError::Dropped => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        ApiError::new(review_status_code(&e), e.code(), e.to_string())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::UnknownAgent(_) => StatusCode::NOT_FOUND,
            GatewayError::AgentFrozen(_) => StatusCode::CONFLICT,
            GatewayError::Review(r) => review_status_code(r),
            GatewayError::InvalidPolicyChange(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::Privacy(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}

type ApiResult<T> = Result<Canon<T>, ApiError>;

fn ok<T>(v: T) -> ApiResult<T> {
    Ok(Canon(StatusCode::OK, v))
}

#[derive(Debug, Deserialize)]
pub struct ReviewQuery {
    pub status: Option<ReviewStatus>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RespondBody {
    pub verdict: ReviewVerdict,
    #[serde(default)]
    pub modified_action: Option<ActionRequest>,
    #[serde(default)]
    pub biometric_confirmed: bool,
    #[serde(default)]
    pub responder: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthorizeBody {
    pub action: ActionRequest,
    #[serde(default = "default_level")]
    pub privacy_level: PrivacyLevel,
}

fn default_level() -> PrivacyLevel {
    PrivacyLevel::Isolated
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreezeResult {
    pub agent_id: AgentId,
    pub frozen: bool,
    pub cancelled: usize,
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/reviews", get(list_reviews))
        .route("/api/reviews/{id}", get(get_review))
        .route("/api/reviews/{id}/respond", post(respond))
        .route("/api/agents", get(list_agents))
        .route("/api/agents/{id}/freeze", post(freeze))
        .route("/api/agents/{id}/unfreeze", post(unfreeze))
        .route("/api/budget/{agent_id}", get(budget))
        .route("/api/events", get(events))
        .route("/api/authorize", post(authorize))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route") })
        .with_state(gw)
}

async fn list_reviews(
    State(gw): State<Arc<Gateway>>,
    q: Result<Query<ReviewQuery>, QueryRejection>,
) -> ApiResult<Vec<aesp_core::review::ReviewRequest>> {
    let Query(q) = q?;
    // Pending requests come back in dequeue order.
    let list = match q.status {
        Some(ReviewStatus::Pending) => gw.queue().pending(),
        s => gw.queue().list(s),
    };
    ok(list)
}

async fn get_review(
    State(gw): State<Arc<Gateway>>,
    id: Result<Path<Uuid>, PathRejection>,
) -> ApiResult<aesp_core::review::ReviewRequest> {
    let Path(id) = id?;
    gw.queue()
        .get(id)
        .map(|r| Canon(StatusCode::OK, r))
        .ok_or_else(|| ReviewError::UnknownRequest(id).into())
}

async fn respond(
    State(gw): State<Arc<Gateway>>,
    id: Result<Path<Uuid>, PathRejection>,
    body: Result<Json<RespondBody>, JsonRejection>,
) -> ApiResult<aesp_core::review::ReviewRequest> {
    let Path(id) = id?;
    let Json(b) = body?;
    let now = gw.now();
    let resp = ReviewResponse {
        request_id: id,
        verdict: b.verdict,
        modified_action: b.modified_action,
        biometric_confirmed: b.biometric_confirmed,
        responder: b.responder.unwrap_or_else(|| "console".into()),
        timestamp: now,
    };
    ok(gw.queue().respond(id, resp, now)?)
}

async fn list_agents(State(gw): State<Arc<Gateway>>) -> ApiResult<Vec<crate::pipeline::AgentSummary>> {
    ok(gw.agent_summaries())
}

async fn freeze(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<FreezeResult> {
    let agent = AgentId::new(id);
    let cancelled = gw.freeze(&agent)?;
    ok(FreezeResult {
        agent_id: agent,
        frozen: true,
        cancelled,
    })
}

async fn unfreeze(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> ApiResult<FreezeResult> {
    let agent = AgentId::new(id);
    gw.unfreeze(&agent)?;
    ok(FreezeResult {
        agent_id: agent,
        frozen: false,
        cancelled: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetView {
    pub agent_id: AgentId,
    pub totals: aesp_core::policy::BudgetTotals,
    pub limits: crate::pipeline::BudgetLimits,
}

async fn budget(State(gw): State<Arc<Gateway>>, Path(agent_id): Path<String>) -> ApiResult<BudgetView> {
    let agent = AgentId::new(agent_id);
    let totals = gw.budget(&agent)?;
    ok(BudgetView {
        limits: gw.limits(&agent),
        agent_id: agent,
        totals,
    })
}

async fn authorize(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<AuthorizeBody>, JsonRejection>,
) -> ApiResult<crate::pipeline::AuthorizeOutcome> {
    let Json(b) = body?;
    ok(gw.authorize(b.action, b.privacy_level).await?)
}

/// Live events only; nothing emitted before the connection is replayed.
async fn events(State(gw): State<Arc<Gateway>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let sub = gw.subscribe();
    let s = stream::unfold(sub, |mut sub| async move {
        let ev = sub.recv().await?;
        let data = canonical_string(&ev).unwrap_or_default();
        let event = Event::default()
            .event(ev.kind.as_str())
            .id(ev.request_id.to_string())
            .data(data);
        Some((Ok(event), sub))
    });
    Sse::new(s).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

/// Serves the API until the process is stopped, sweeping expirations once
/// a second.
pub async fn serve(gw: Arc<Gateway>, bind: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    serve_on(gw, listener).await
}

pub async fn serve_on(gw: Arc<Gateway>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let ticker = gw.clone();
    tokio::spawn(async move {
        let mut iv = tokio::time::interval(Duration::from_secs(1));
        loop {
            iv.tick().await;
            ticker.tick();
        }
    });
    axum::serve(listener, router(gw)).await
}
