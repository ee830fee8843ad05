//! HTTP surfaces of the bus: the rover port (`POST /esb`, `GET /esb/wsdl`)
//! and the JSON management API under `/ops`.
//!
//! Reads of services and operations are open. Everything else on `/ops`
//! requires `Authorization: Bearer <management_secret>`; the event stream
//! also accepts `?token=` because browsers cannot set headers on it.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;
use tower_http::cors::CorsLayer;

use super::session::secrets_match;
use super::Esb;
use crate::dsn::{self, LinkParams, ProxyHandle};
use crate::fault::{Fault, FaultCode};
use crate::registry::{RegistryError, ServiceDescriptor, ServiceStatus};

/// Request bodies may carry images.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    detail: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "fault": self.code, "detail": self.detail }))).into_response()
    }
}

impl From<Fault> for ApiError {
    fn from(f: Fault) -> Self {
        ApiError {
            status: StatusCode::from_u16(f.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code: f.code.as_str().to_owned(),
            detail: f.detail,
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::Conflict { .. } => StatusCode::CONFLICT,
            RegistryError::UnknownService(_) | RegistryError::UnknownOperation(_) => StatusCode::NOT_FOUND,
            RegistryError::Invalid(_) => StatusCode::BAD_REQUEST,
            RegistryError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code().to_owned(),
            detail: e.to_string(),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn authorize(esb: &Esb, headers: &HeaderMap, token: Option<&str>) -> ApiResult<()> {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match bearer.or(token) {
        Some(given) if secrets_match(given, &esb.config().management_secret) => Ok(()),
        _ => Err(Fault::new(FaultCode::AuthFailed, "management credential required").into()),
    }
}

pub fn rover_router(esb: Arc<Esb>) -> Router {
    Router::new()
        .route("/esb", post(invoke))
        .route("/esb/wsdl", get(wsdl))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(esb)
}

async fn invoke(State(esb): State<Arc<Esb>>, body: Bytes) -> Response {
    let xml = esb.handle(&body).await;
    ([(header::CONTENT_TYPE, "text/xml; charset=utf-8")], xml).into_response()
}

async fn wsdl(State(esb): State<Arc<Esb>>) -> Response {
    Json(esb.discover()).into_response()
}

pub fn ops_router(esb: Arc<Esb>) -> Router {
    let console = esb.config().console_dir.clone();
    let router = Router::new()
        .route("/ops/services", get(list_services).post(publish))
        .route("/ops/services/{name}", get(describe).delete(unpublish))
        .route("/ops/services/{name}/status", post(set_status))
        .route("/ops/services/{name}/probe", get(probe))
        .route("/ops/operations", get(list_operations))
        .route("/ops/audit", get(audit))
        .route("/ops/events", get(events))
        .route("/ops/dsn", get(get_dsn).put(put_dsn))
        .route("/ops/images", post(store_image))
        .route("/ops/images/{id}", get(fetch_image));
    let router = match console {
        Some(dir) => router.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => router,
    };
    router
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(esb)
}

async fn list_services(State(esb): State<Arc<Esb>>) -> Json<Vec<ServiceDescriptor>> {
    Json(esb.registry().services())
}

async fn describe(State(esb): State<Arc<Esb>>, Path(name): Path<String>) -> ApiResult<Json<ServiceDescriptor>> {
    Ok(Json(esb.registry().describe(&name)?))
}

async fn list_operations(State(esb): State<Arc<Esb>>) -> Response {
    Json(esb.discover()).into_response()
}

async fn publish(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    let d: ServiceDescriptor = serde_json::from_slice(&body)
        .map_err(|e| Fault::validation(format!("descriptor: {e}")))?;
    let service = d.service_name.clone();
    let version = esb.publish(d)?;
    Ok(Json(json!({ "service_name": service, "version": version })))
}

async fn unpublish(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Path(name): Path<String>,
) -> ApiResult<Json<ServiceDescriptor>> {
    authorize(&esb, &headers, None)?;
    Ok(Json(esb.unpublish(&name)?))
}

#[derive(Deserialize)]
struct StatusBody {
    status: ServiceStatus,
}

async fn set_status(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    let StatusBody { status } = serde_json::from_slice(&body)
        .map_err(|e| Fault::validation(format!("expected {{\"status\": \"ACTIVE\"|\"FAILED\"}}: {e}")))?;
    let previous = match status {
        ServiceStatus::Active => esb.fix(&name).await?,
        ServiceStatus::Failed => esb.set_status(&name, status, "failed by operator")?,
    };
    Ok(Json(json!({ "service_name": name, "previous": previous, "status": status })))
}

async fn probe(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Path(name): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    let d = esb.registry().describe(&name)?;
    let reachable = crate::adapters::probe(&d.endpoint).await;
    Ok(Json(json!({ "service_name": name, "reachable": reachable })))
}

#[derive(Deserialize)]
struct AuditQuery {
    #[serde(default)]
    after: u64,
    message_id: Option<String>,
    limit: Option<usize>,
}

async fn audit(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Query(q): Query<AuditQuery>,
) -> ApiResult<Json<Vec<super::AuditRecord>>> {
    authorize(&esb, &headers, None)?;
    let mut records = esb.audit().since(q.after);
    if let Some(id) = &q.message_id {
        records.retain(|r| &r.message_id == id);
    }
    if let Some(limit) = q.limit {
        records.truncate(limit);
    }
    Ok(Json(records))
}

async fn events(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    authorize(&esb, &headers, q.get("token").map(String::as_str))?;
    let stream = BroadcastStream::new(esb.subscribe()).filter_map(|item| {
        // A lagging subscriber skips what it missed.
        let ev = item.ok()?;
        Event::default().event(ev.name()).json_data(&ev).ok().map(Ok)
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

fn dsn_state(esb: &Esb) -> Json<serde_json::Value> {
    Json(json!({ "params": esb.dsn().params(), "stats": esb.dsn().stats() }))
}

async fn get_dsn(State(esb): State<Arc<Esb>>, headers: HeaderMap) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    Ok(dsn_state(&esb))
}

async fn put_dsn(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    let params: LinkParams =
        serde_json::from_slice(&body).map_err(|e| Fault::validation(format!("link parameters: {e}")))?;
    esb.set_link(params).map_err(Fault::validation)?;
    Ok(dsn_state(&esb))
}

async fn store_image(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    authorize(&esb, &headers, None)?;
    let id = esb.store_image(&body)?;
    Ok(Json(json!({ "storage_id": id })))
}

async fn fetch_image(
    State(esb): State<Arc<Esb>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    authorize(&esb, &headers, None)?;
    let bytes = esb
        .images()
        .get(&id)
        .ok_or_else(|| ApiError {
            status: StatusCode::NOT_FOUND,
            code: "NOT_FOUND".into(),
            detail: format!("no image `{id}`"),
        })?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-pixmap")], bytes).into_response())
}

/// A running bus with its listeners.
pub struct EsbHandle {
    pub esb: Arc<Esb>,
    pub rover_addr: SocketAddr,
    pub ops_addr: SocketAddr,
    pub dsn_addr: Option<SocketAddr>,
    tasks: Vec<JoinHandle<()>>,
    proxy: Option<ProxyHandle>,
}

impl EsbHandle {
    /// Direct rover endpoint base URL (bypasses the link).
    pub fn rover_url(&self) -> String {
        format!("http://{}", self.rover_addr)
    }

    pub fn ops_url(&self) -> String {
        format!("http://{}", self.ops_addr)
    }

    /// The URL a rover should use: through the link when one is configured.
    pub fn link_url(&self) -> String {
        format!("http://{}", self.dsn_addr.unwrap_or(self.rover_addr))
    }

    pub fn shutdown(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
        if let Some(p) = self.proxy.take() {
            p.shutdown();
        }
    }
}

impl Drop for EsbHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

async fn serve(listen: SocketAddr, app: Router) -> Result<(SocketAddr, JoinHandle<()>), String> {
    let listener = TcpListener::bind(listen).await.map_err(|e| format!("bind {listen}: {e}"))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("listener {addr}: {e}");
        }
    });
    Ok((addr, task))
}

/// Builds the bus from `config` and starts its listeners.
pub async fn start(config: super::EsbConfig) -> Result<EsbHandle, String> {
    start_with(Esb::new(config)?).await
}

pub async fn start_with(esb: Esb) -> Result<EsbHandle, String> {
    let esb = Arc::new(esb);
    let (rover_addr, rover_task) = serve(esb.config().rover_listen, rover_router(Arc::clone(&esb))).await?;
    let (ops_addr, ops_task) = serve(esb.config().ops_listen, ops_router(Arc::clone(&esb))).await?;
    let proxy = match esb.config().dsn_listen {
        Some(listen) => Some(
            dsn::spawn_proxy(listen, rover_addr.to_string(), Arc::clone(esb.dsn()))
                .await
                .map_err(|e| format!("bind {listen}: {e}"))?,
        ),
        None => None,
    };
    tracing::info!(%rover_addr, %ops_addr, "bus listening");
    Ok(EsbHandle {
        dsn_addr: proxy.as_ref().map(|p| p.addr),
        esb,
        rover_addr,
        ops_addr,
        tasks: vec![rover_task, ops_task],
        proxy,
    })
}
