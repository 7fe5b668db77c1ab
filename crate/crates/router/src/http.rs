//! HTTP front-end: a thin axum layer over the routing service.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::service::{RouterService, SubmitOutcome};

#[derive(Debug, Deserialize)]
struct SubmitBody {
    ticket_id: Option<String>,
    #[serde(default)]
    subject: String,
    #[serde(default)]
    body: String,
}

pub fn app(service: Arc<RouterService>) -> Router {
    Router::new()
        .route("/tickets", post(submit))
        .route("/tickets/{id}", get(lookup))
        .route("/metrics", get(metrics))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(service)
}

/// Serve until the listener errors or the task is aborted.
pub async fn serve(
    service: Arc<RouterService>,
    listener: tokio::net::TcpListener,
) -> std::io::Result<()> {
    axum::serve(listener, app(service)).await
}

async fn submit(
    State(service): State<Arc<RouterService>>,
    Json(body): Json<SubmitBody>,
) -> impl IntoResponse {
    match service.submit(body.ticket_id, &body.subject, &body.body) {
        Ok(SubmitOutcome::Accepted(id)) => (
            StatusCode::ACCEPTED,
            Json(json!({ "ticket_id": id, "status": "accepted" })),
        ),
        Ok(SubmitOutcome::Duplicate(id)) => (
            StatusCode::CONFLICT,
            Json(json!({ "ticket_id": id, "status": "duplicate" })),
        ),
        Ok(SubmitOutcome::RejectedFull) => (
            StatusCode::TOO_MANY_REQUESTS,
            Json(json!({ "status": "rejected-full" })),
        ),
        Err(e) => (
            StatusCode::BAD_REQUEST,
            Json(json!({ "status": "rejected", "error": e.to_string() })),
        ),
    }
}

async fn lookup(
    State(service): State<Arc<RouterService>>,
    Path(id): Path<String>,
) -> impl IntoResponse {
    match service.lookup(&id) {
        Some(record) => (StatusCode::OK, Json(serde_json::to_value(&record).unwrap())),
        None => (
            StatusCode::NOT_FOUND,
            Json(json!({ "error": "not-found", "ticket_id": id })),
        ),
    }
}

async fn metrics(State(service): State<Arc<RouterService>>) -> impl IntoResponse {
    Json(service.snapshot())
}
