//! HTTP facade over the engine and the repository.
//!
//! Callers authenticate with `POST /auth/login` and send the returned token
//! as `Authorization: Bearer <token>`. Files reach the repository through
//! the staging area: upload first, then pass the staging URL by reference.

mod auth;
mod config;
pub mod endpoints;
mod routes;
mod staging;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub use auth::{Session, Sessions};
pub use config::{hash_password, Config, Role, UserEntry};
pub use endpoints::{Access, Endpoint, ENDPOINTS};
pub use staging::{Staging, StagingRef, StagingResolver};

use crate::engine::{Engine, EngineError, EngineOptions};
use crate::repository::{DefaultResolver, Repository, RepositoryError, RepositoryOptions};

/// Startup failures.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("repository: {0}")]
    Repository(#[from] RepositoryError),
}

/// Error body `{code, message, detail?}` with its HTTP status.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status_for(code),
            code: code.to_owned(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new("BAD_REQUEST", message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// HTTP status for an error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UNAUTHENTICATED" | "BAD_CREDENTIALS" => StatusCode::UNAUTHORIZED,
        "FORBIDDEN" | "FORBIDDEN_ACTOR" => StatusCode::FORBIDDEN,
        "TASK_NOT_OPEN" | "INSTANCE_NOT_RUNNING" | "NO_DEFAULT_TRANSITION" | "NO_OPEN_TASK" | "NO_ACTOR_FOR_ROLE"
        | "DATASTREAM_EXISTS" | "STATE_CONFLICT" => StatusCode::CONFLICT,
        "PAYLOAD_TOO_LARGE" => StatusCode::PAYLOAD_TOO_LARGE,
        "UNSOUND_DEFINITION" | "VALIDATION_FAILED" | "UNRESOLVABLE_LOCATION" => StatusCode::UNPROCESSABLE_ENTITY,
        "LIVELOCK" | "REPLAY_DIVERGED" | "STORAGE_ERROR" | "INVALID_NAMESPACE" | "INTERNAL" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        "UNKNOWN_FIELD" | "UNKNOWN_TRANSITION" => StatusCode::BAD_REQUEST,
        c if c.starts_with("UNKNOWN_") || c == "NOT_FOUND" => StatusCode::NOT_FOUND,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        (status, Json(self)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let err = ApiError::new(e.code(), e.to_string());
        if e.violations().is_empty() {
            err
        } else {
            err.with_detail(serde_json::to_value(e.violations()).unwrap_or_default())
        }
    }
}

impl From<RepositoryError> for ApiError {
    fn from(e: RepositoryError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

#[derive(Clone)]
pub(crate) struct AppState {
    pub engine: Arc<Engine>,
    pub repo: Arc<Repository>,
    pub sessions: Arc<Sessions>,
    pub staging: Arc<Staging>,
    pub upload_limit: u64,
    pub description: Arc<Vec<u8>>,
}

/// A bound, not yet running server.
pub struct Prepared {
    listener: TcpListener,
    router: axum::Router,
    pub addr: SocketAddr,
    pub base_url: String,
    staging: Arc<Staging>,
    sweep_every: Duration,
}

/// Binds the port and opens engine and repository under `dataDir`.
pub async fn prepare(config: Config) -> Result<Prepared, ServiceError> {
    config.check()?;
    let listener = TcpListener::bind((config.bind.as_str(), config.port)).await?;
    let addr = listener.local_addr()?;
    let base_url = config
        .base_url
        .clone()
        .unwrap_or_else(|| format!("http://{addr}"))
        .trim_end_matches('/')
        .to_owned();
    let data = config.data_dir.clone();
    let staging_ttl = Duration::from_secs(config.staging_ttl_seconds);
    let staging = Arc::new(Staging::open(data.join("staging"), &base_url, staging_ttl)?);
    staging.sweep();
    let sessions = Arc::new(Sessions::new(config.users.clone(), config.session_ttl_seconds));

    let mut engine_options = EngineOptions {
        fsync: config.fsync,
        ..EngineOptions::default()
    };
    for role in Role::ALL {
        for user in sessions.holders(role) {
            engine_options = engine_options.with_actor(role.as_str(), user);
        }
    }
    let repo_options = RepositoryOptions {
        resolver: Arc::new(StagingResolver {
            staging: staging.clone(),
            fallback: DefaultResolver::default(),
        }),
        fsync: config.fsync,
        ..RepositoryOptions::new(&config.pid_namespace)
    };
    let (engine, repo) = tokio::task::spawn_blocking(move || {
        Ok::<_, ServiceError>((
            Engine::open(&data.join("engine"), engine_options)?,
            Repository::open(&data.join("repository"), repo_options)?,
        ))
    })
    .await
    .map_err(|e| ServiceError::Config(e.to_string()))??;

    let description = serde_json::to_vec_pretty(&endpoints::description()).expect("description serializes");
    let state = AppState {
        engine: Arc::new(engine),
        repo: Arc::new(repo),
        sessions,
        staging: staging.clone(),
        upload_limit: config.upload_limit,
        description: Arc::new(description),
    };
    let router = routes::router(state, config.ui_dir.as_deref());
    Ok(Prepared {
        listener,
        router,
        addr,
        base_url,
        staging,
        sweep_every: staging_ttl.clamp(Duration::from_secs(1), Duration::from_secs(60)),
    })
}

impl Prepared {
    /// Serves until `shutdown` resolves.
    pub async fn run(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let staging = self.staging.clone();
        let every = self.sweep_every;
        let sweeper = tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let s = staging.clone();
                let _ = tokio::task::spawn_blocking(move || s.sweep()).await;
            }
        });
        let result = axum::serve(self.listener, self.router).with_graceful_shutdown(shutdown).await;
        sweeper.abort();
        result
    }
}

/// Runs the server on the current runtime until the process is stopped.
pub async fn serve(config: Config) -> Result<(), ServiceError> {
    let prepared = prepare(config).await?;
    println!("listening on {}", prepared.base_url);
    log::info!("listening on {}", prepared.addr);
    prepared.run(std::future::pending()).await?;
    Ok(())
}

/// A server running on its own thread and runtime.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub base_url: String,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

pub fn spawn(config: Config) -> Result<RunningServer, ServiceError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    let prepared = runtime.block_on(prepare(config))?;
    let (addr, base_url) = (prepared.addr, prepared.base_url.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            if let Err(e) = prepared.run(async { let _ = rx.await; }).await {
                log::error!("server stopped: {e}");
            }
        });
    });
    Ok(RunningServer {
        addr,
        base_url,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
