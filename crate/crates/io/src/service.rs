//! Websocket endpoint for live sessions plus static UI assets.
//!
//! `GET /live` upgrades to a websocket speaking `aaad-live/1`; every
//! connection owns one [`LiveSession`]. Everything else is served from the
//! assets directory when one is configured.

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use aaad_core::bundle::Model;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tower_http::services::ServeDir;

use crate::live::{encode_server, LiveOptions, LiveSession, ServerMessage};

#[derive(Clone)]
pub struct ServiceConfig {
    pub model: Arc<Model>,
    pub live: LiveOptions,
    pub assets: Option<PathBuf>,
    /// Directory receiving one `aaad-log/1` capture per connection.
    pub log_dir: Option<PathBuf>,
}

struct Shared {
    cfg: ServiceConfig,
    sessions: AtomicU64,
    stopping: watch::Receiver<bool>,
    /// Held by every live session; the channel closes once all are gone.
    _alive: mpsc::Sender<()>,
}

pub fn router(cfg: ServiceConfig) -> Router {
    let (_, stopping) = watch::channel(false);
    let (alive, _) = mpsc::channel(1);
    build(cfg, stopping, alive)
}

fn build(cfg: ServiceConfig, stopping: watch::Receiver<bool>, alive: mpsc::Sender<()>) -> Router {
    let assets = cfg.assets.clone();
    let shared = Arc::new(Shared { cfg, sessions: AtomicU64::new(0), stopping, _alive: alive });
    let app = Router::new().route("/live", get(upgrade)).with_state(shared);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Serve until `shutdown` resolves, then close open sessions and wait for
/// their logs to be written.
pub async fn serve(listener: TcpListener, cfg: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let (alive, mut all_done) = mpsc::channel(1);
    let app = build(cfg, stop_rx, alive);
    let signal = async move {
        shutdown.await;
        let _ = stop_tx.send(true);
    };
    axum::serve(listener, app).with_graceful_shutdown(signal).await?;
    let _ = all_done.recv().await;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    let id = shared.sessions.fetch_add(1, Ordering::Relaxed) + 1;
    ws.on_upgrade(move |socket| run_session(socket, shared, id))
}

async fn run_session(mut socket: WebSocket, shared: Arc<Shared>, id: u64) {
    let mut session = LiveSession::new(shared.cfg.model.clone(), shared.cfg.live.clone());
    let mut stopping = shared.stopping.clone();
    tracing::info!(session = id, "live session opened");
    loop {
        let msg = tokio::select! {
            m = socket.recv() => m,
            _ = stop_requested(&mut stopping) => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
        };
        let Some(msg) = msg else { break };
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) => break,
            Ok(Message::Binary(_)) => {
                let reply = vec![encode_server(&ServerMessage::Error { message: "binary frames are not supported".into() })];
                if send_all(&mut socket, reply).await.is_err() {
                    break;
                }
                continue;
            }
            Ok(_) => continue,
            Err(e) => {
                tracing::warn!(session = id, error = %e, "websocket error");
                break;
            }
        };
        let replies = session.handle_text(text.as_str());
        if send_all(&mut socket, replies).await.is_err() {
            break;
        }
    }
    tracing::info!(session = id, trials = session.reports().len(), "live session closed");
    if let Some(dir) = &shared.cfg.log_dir {
        write_capture(dir, id, &session).await;
    }
}

/// Resolves once shutdown begins; never, for a router used without [`serve`].
async fn stop_requested(stopping: &mut watch::Receiver<bool>) {
    if stopping.wait_for(|s| *s).await.is_err() {
        std::future::pending::<()>().await;
    }
}

async fn send_all(socket: &mut WebSocket, replies: Vec<String>) -> Result<(), axum::Error> {
    for r in replies {
        socket.send(Message::Text(r.into())).await?;
    }
    Ok(())
}

async fn write_capture(dir: &std::path::Path, id: u64, session: &LiveSession) {
    if session.log_records().is_empty() {
        return;
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let path = dir.join(format!("session-{stamp}-{id}.log"));
    let result = async {
        tokio::fs::create_dir_all(dir).await?;
        tokio::fs::write(&path, session.log_text()).await
    }
    .await;
    match result {
        Ok(()) => tracing::info!(path = %path.display(), "session log written"),
        Err(e) => tracing::error!(path = %path.display(), error = %e, "cannot write session log"),
    }
}
