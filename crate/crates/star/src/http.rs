//! HTTP front ends for the three services.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::aggregation::AggregationService;
use crate::error::{Result, StarError};
use crate::randomness::RandomnessService;
use crate::relay::{Relay, RelayLogRecord, MESSAGE_HEADER};

pub const EPOCH_HEADER: &str = "X-STAR-Epoch";
const OCTETS: &str = "application/octet-stream";

pub fn status_for(err: &StarError) -> StatusCode {
    use star_core::Error as Core;
    match err {
        StarError::Core(Core::MalformedRequest | Core::MalformedMessage | Core::InputLength) => StatusCode::BAD_REQUEST,
        StarError::EpochExpired { .. } | StarError::EpochClosed(_) => StatusCode::GONE,
        StarError::EpochOpen(_) => StatusCode::CONFLICT,
        StarError::UnknownEpoch(_) => StatusCode::NOT_FOUND,
        StarError::KeyMismatch { .. } | StarError::CapsuleRejected | StarError::MalformedInnerRequest(_) => {
            StatusCode::BAD_REQUEST
        }
        StarError::RateLimited => StatusCode::TOO_MANY_REQUESTS,
        StarError::Upstream(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(StarError);

impl From<StarError> for ApiError {
    fn from(e: StarError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        let body = if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
            "internal error".to_owned()
        } else {
            self.0.to_string()
        };
        (status, body).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn octets(body: Vec<u8>) -> Response {
    ([(axum::http::header::CONTENT_TYPE, OCTETS)], body).into_response()
}

// randomness

pub fn randomness_router(service: Arc<RandomnessService>) -> Router {
    Router::new()
        .route("/info", get(info))
        .route("/evaluate", post(evaluate))
        .route("/rotate", post(rotate))
        .with_state(service)
}

async fn info(State(svc): State<Arc<RandomnessService>>) -> Response {
    octets(svc.handle_info().to_vec())
}

async fn evaluate(
    State(svc): State<Arc<RandomnessService>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    if !svc.admit(&peer.ip().to_string()) {
        return Err(StarError::RateLimited.into());
    }
    let epoch = headers
        .get(EPOCH_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or(StarError::Core(star_core::Error::MalformedRequest))?;
    let response = svc.handle_evaluate(&body, epoch)?;
    Ok(octets(response.to_vec()))
}

async fn rotate(State(svc): State<Arc<RandomnessService>>) -> ApiResult<String> {
    Ok(svc.rotate_epoch()?.to_string())
}

// aggregation

pub fn aggregation_router(service: Arc<AggregationService>) -> Router {
    Router::new()
        .route("/config", get(config))
        .route("/submit", post(submit))
        .route("/close-epoch", post(close_epoch))
        .route("/report/{epoch}", get(report))
        .with_state(service)
}

async fn config(State(svc): State<Arc<AggregationService>>) -> Response {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        svc.handle_config().to_vec(),
    )
        .into_response()
}

async fn submit(State(svc): State<Arc<AggregationService>>, headers: HeaderMap, body: Bytes) -> ApiResult<StatusCode> {
    let message = match headers.get(MESSAGE_HEADER) {
        Some(v) => BASE64
            .decode(v.as_bytes())
            .map_err(|_| StarError::Core(star_core::Error::MalformedMessage))?,
        None => body.to_vec(),
    };
    svc.handle_ingest(&message)?;
    Ok(StatusCode::OK)
}

async fn close_epoch(State(svc): State<Arc<AggregationService>>) -> ApiResult<String> {
    Ok(svc.close_epoch()?.to_string())
}

async fn report(State(svc): State<Arc<AggregationService>>, Path(epoch): Path<u64>) -> ApiResult<Response> {
    let bytes = tokio::task::spawn_blocking(move || svc.report(epoch))
        .await
        .map_err(|e| StarError::Config(e.to_string()))??;
    Ok((
        [(axum::http::header::CONTENT_TYPE, "application/jsonl")],
        bytes.as_ref().clone(),
    )
        .into_response())
}

// relay

#[derive(Clone, Debug)]
pub struct RelayState {
    pub relay: Arc<Relay>,
    pub upstream: String,
    pub client: reqwest::Client,
}

impl RelayState {
    pub fn new(relay: Arc<Relay>, upstream: impl Into<String>) -> Self {
        RelayState {
            relay,
            upstream: upstream.into().trim_end_matches('/').to_owned(),
            client: reqwest::Client::new(),
        }
    }
}

pub fn relay_router(state: RelayState) -> Router {
    Router::new()
        .route("/relay", post(relay))
        .route("/relay-config", get(relay_config))
        .route("/relay-rotate", post(relay_rotate))
        .with_state(state)
}

async fn relay(State(state): State<RelayState>, body: Bytes) -> Response {
    let record = |forwarded_bytes, status: StatusCode| {
        state.relay.record(RelayLogRecord {
            capsule_bytes: body.len(),
            forwarded_bytes,
            status: status.as_u16(),
        })
    };
    let message = match state.relay.open(&body) {
        Ok(m) => m,
        Err(e) => {
            let status = status_for(&e);
            record(0, status);
            return (status, e.to_string()).into_response();
        }
    };
    // fresh request: only the message header crosses over
    let upstream = state
        .client
        .post(format!("{}/submit", state.upstream))
        .header(MESSAGE_HEADER, BASE64.encode(&message))
        .send()
        .await;
    match upstream {
        Ok(resp) => {
            let status = StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
            let body = resp.bytes().await.map(|b| b.to_vec()).unwrap_or_default();
            record(message.len(), status);
            (status, body).into_response()
        }
        Err(e) => {
            record(0, StatusCode::BAD_GATEWAY);
            (StatusCode::BAD_GATEWAY, format!("upstream unavailable: {e}")).into_response()
        }
    }
}

async fn relay_config(State(state): State<RelayState>) -> Response {
    octets(state.relay.config().to_bytes().to_vec())
}

async fn relay_rotate(State(state): State<RelayState>) -> String {
    state.relay.rotate().key_id.to_string()
}

/// A server running on the current tokio runtime.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

/// Serves `router` on `addr` (port 0 picks a free one) until shut down.
pub async fn spawn(router: Router, addr: SocketAddr) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let service = router.into_make_service_with_connect_info::<SocketAddr>();
        let result = axum::serve(listener, service)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(e) = result {
            log::error!("server on {addr} failed: {e}");
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

/// [`spawn`] on an ephemeral loopback port.
pub async fn spawn_local(router: Router) -> Result<ServerHandle> {
    spawn(router, SocketAddr::from(([127, 0, 0, 1], 0))).await
}
