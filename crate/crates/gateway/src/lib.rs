//! The gateway's HTTP surface: sessions, streamed turns, logs, profiles,
//! metrics and a live event stream. See `docs/api.md` for the contract.

mod app;
pub mod config;
pub mod error;
pub mod live;

use std::net::SocketAddr;
use std::sync::Arc;

use companion_core::pipeline::{Clock, Engine, SystemClock};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use app::{parse_span_ms, router, Accepted, AppState, Health, TURN_STREAM_CONTENT_TYPE};
pub use config::{ConfigError, GatewayConfig};
pub use error::{ApiError, ErrorBody, ErrorCode};
pub use live::{LiveHub, LiveItem};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Build the application state: providers, guardrails, store (with seed
/// profiles) and engine.
pub fn build_state(config: &GatewayConfig, clock: Arc<dyn Clock>) -> Result<AppState, ConfigError> {
    let store = Arc::new(config.open_store()?);
    for profile in config.seed_profiles() {
        store.ensure_profile(profile, clock.now_ms())?;
    }
    let engine = Engine::new(
        config.providers()?,
        Arc::new(config.guardrails()?),
        store,
        clock,
    );
    Ok(AppState {
        engine: Arc::new(engine),
        hub: Arc::new(LiveHub::new()),
        token: config.server.token.clone(),
        turns: config.turns,
        max_upload_bytes: config.server.max_upload_bytes,
    })
}

/// A gateway listening in the background.
pub struct RunningGateway {
    pub addr: SocketAddr,
    pub state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningGateway {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting connections and wait for the server to finish.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Bind `config.server.bind` and serve in a background task.
pub async fn spawn(
    config: &GatewayConfig,
    clock: Arc<dyn Clock>,
) -> Result<RunningGateway, ServeError> {
    let state = build_state(config, clock)?;
    spawn_with_state(config.bind_addr()?, state).await
}

pub async fn spawn_with_state(
    addr: SocketAddr,
    state: AppState,
) -> Result<RunningGateway, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningGateway {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}

/// Serve until Ctrl-C.
pub async fn serve(config: &GatewayConfig) -> Result<(), ServeError> {
    let running = spawn(config, Arc::new(SystemClock)).await?;
    tracing::info!(addr = %running.addr, auth = config.server.token.is_some(), "gateway listening");
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    running.shutdown().await?;
    Ok(())
}
