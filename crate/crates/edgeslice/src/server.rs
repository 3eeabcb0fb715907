//! The `mapss_mm` HTTP API.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use edgeslice_core::canonical::to_canonical_string;
use edgeslice_core::{Meco, MecoError, RegistryError};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub const DELETED_OBJECTS_HEADER: &str = "x-deleted-objects";

pub fn router(meco: Arc<Meco>) -> Router {
    Router::new()
        .route("/mapss_mm/v1/mapss", get(list).post(instantiate))
        .route(
            "/mapss_mm/v1/mapss/{mapss_id}",
            get(fetch).delete(terminate),
        )
        .route("/registry/v1/images/{image_ref}", get(image))
        .route("/cluster/v1/state", get(cluster_state))
        .layer(middleware::from_fn(log_request))
        .with_state(meco)
}

pub async fn serve(listener: TcpListener, meco: Arc<Meco>) -> std::io::Result<()> {
    axum::serve(listener, router(meco)).await
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        path,
        status = resp.status().as_u16(),
        elapsed_us = start.elapsed().as_micros() as u64,
        "request"
    );
    resp
}

fn error_response(e: MecoError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(e)).into_response()
}

async fn blocking<T, F>(f: F) -> Result<T, Response>
where
    F: FnOnce() -> Result<T, MecoError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(error_response),
        Err(e) => Err((
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"kind": "Internal", "message": e.to_string()})),
        )
            .into_response()),
    }
}

async fn instantiate(State(meco): State<Arc<Meco>>, body: Bytes) -> Response {
    match blocking(move || meco.handle_instantiate(&body)).await {
        Ok(rec) => (StatusCode::CREATED, Json(rec)).into_response(),
        Err(r) => r,
    }
}

async fn terminate(State(meco): State<Arc<Meco>>, Path(mapss_id): Path<String>) -> Response {
    match blocking(move || meco.handle_terminate(&mapss_id)).await {
        Ok(report) => {
            let mut headers = HeaderMap::new();
            headers.insert(
                DELETED_OBJECTS_HEADER,
                HeaderValue::from(report.deleted_objects as u64),
            );
            (StatusCode::NO_CONTENT, headers).into_response()
        }
        Err(r) => r,
    }
}

async fn fetch(State(meco): State<Arc<Meco>>, Path(mapss_id): Path<String>) -> Response {
    match meco.get_instance(&mapss_id) {
        Ok(rec) => Json(rec).into_response(),
        Err(e) => error_response(e),
    }
}

async fn list(State(meco): State<Arc<Meco>>) -> Response {
    Json(meco.list_instances()).into_response()
}

async fn image(State(meco): State<Arc<Meco>>, Path(image_ref): Path<String>) -> Response {
    match meco.lookup_image(&image_ref) {
        Ok(rec) => Json(rec).into_response(),
        Err(e) => {
            let status = match e {
                RegistryError::NotFound(_) => StatusCode::NOT_FOUND,
                _ => StatusCode::BAD_REQUEST,
            };
            (status, Json(json!({"message": e.to_string()}))).into_response()
        }
    }
}

async fn cluster_state(State(meco): State<Arc<Meco>>) -> Response {
    let body = to_canonical_string(&meco.cluster_snapshot());
    ([("content-type", "application/json")], body).into_response()
}

/// A server on its own runtime thread, stopped on drop.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl BackgroundServer {
    /// Binds `127.0.0.1` on an ephemeral port.
    pub fn start(meco: Arc<Meco>) -> anyhow::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .context("building server runtime")?;
        let listener = rt
            .block_on(TcpListener::bind("127.0.0.1:0"))
            .context("binding server socket")?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("meco-server".into())
            .spawn(move || {
                rt.block_on(async move {
                    let server =
                        axum::serve(listener, router(meco)).with_graceful_shutdown(async {
                            let _ = rx.await;
                        });
                    if let Err(e) = server.await {
                        tracing::error!(error = %e, "server stopped");
                    }
                });
            })?;
        Ok(BackgroundServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
