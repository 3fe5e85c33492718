//! HTTP/JSON routes over [`FleetServer`].

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cavfleet_core::wire::{
    Ack, AssignmentUpdate, ErrorBody, FleetEntry, HealthReport, HeartbeatRequest, HeartbeatResponse,
    RelayMeasurement, RelayQuery, TelemetryAck, TelemetryRecord, VersionAssignment, WhitelistState, WhitelistUpdate,
};
use cavfleet_core::Vin;
use tokio::net::TcpListener;

use crate::error::ServerError;
use crate::server::FleetServer;

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<ServerError> for ApiError {
    fn from(e: ServerError) -> Self {
        let status = match &e {
            ServerError::Validation(_) | ServerError::UnknownVersionSet(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServerError::InvertedRange { .. } => StatusCode::BAD_REQUEST,
            ServerError::HeartbeatRegressed { .. } => StatusCode::CONFLICT,
            ServerError::Config(_) | ServerError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: r.status(),
            message: r.body_text(),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: r.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type Shared = State<Arc<FleetServer>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

async fn post_telemetry(State(s): Shared, body: Result<Json<TelemetryRecord>, JsonRejection>) -> ApiResult<TelemetryAck> {
    Ok(Json(s.ingest_telemetry(body?.0)?))
}

async fn post_health(State(s): Shared, body: Result<Json<HealthReport>, JsonRejection>) -> ApiResult<Ack> {
    Ok(Json(s.ingest_health(body?.0)?))
}

async fn post_heartbeat(
    State(s): Shared,
    body: Result<Json<HeartbeatRequest>, JsonRejection>,
) -> ApiResult<HeartbeatResponse> {
    Ok(Json(s.record_heartbeat(&body?.0)?))
}

async fn get_fleet(State(s): Shared) -> Json<Vec<FleetEntry>> {
    Json(s.fleet_snapshot())
}

async fn get_whitelist(State(s): Shared, Path(vin): Path<String>) -> Json<WhitelistState> {
    Json(s.get_whitelist(&Vin(vin)))
}

async fn put_whitelist(
    State(s): Shared,
    Path(vin): Path<String>,
    body: Result<Json<WhitelistUpdate>, JsonRejection>,
) -> ApiResult<WhitelistState> {
    Ok(Json(s.set_whitelist(&Vin(vin), body?.0.whitelisted)?))
}

async fn post_relay(State(s): Shared, body: Result<Json<RelayMeasurement>, JsonRejection>) -> ApiResult<Ack> {
    Ok(Json(s.publish_measurement(body?.0)?))
}

async fn get_relay(State(s): Shared, q: Result<Query<RelayQuery>, QueryRejection>) -> ApiResult<Vec<RelayMeasurement>> {
    Ok(Json(s.query_measurements(&q?.0)?))
}

async fn put_assignment(
    State(s): Shared,
    Path(vin): Path<String>,
    body: Result<Json<AssignmentUpdate>, JsonRejection>,
) -> ApiResult<VersionAssignment> {
    Ok(Json(s.assign_version(&Vin(vin), &body?.0.version_set_id)?))
}

async fn get_assignment(State(s): Shared, Path(vin): Path<String>) -> Json<VersionAssignment> {
    Json(s.get_assignment(&Vin(vin)))
}

pub fn router(server: Arc<FleetServer>) -> Router {
    Router::new()
        .route("/telemetry", post(post_telemetry))
        .route("/health", post(post_health))
        .route("/heartbeat", post(post_heartbeat))
        .route("/fleet", get(get_fleet))
        .route("/whitelist/{vin}", get(get_whitelist).put(put_whitelist))
        .route("/relay", post(post_relay).get(get_relay))
        .route("/assignment/{vin}", get(get_assignment).put(put_assignment))
        .with_state(server)
}

pub async fn serve(listener: TcpListener, server: Arc<FleetServer>) -> std::io::Result<()> {
    axum::serve(listener, router(server)).await
}

pub async fn serve_until(
    listener: TcpListener,
    server: Arc<FleetServer>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(server)).with_graceful_shutdown(shutdown).await
}
