//! HTTP and websocket front end.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::hub::{telemetry_line, Hub};
use crate::protocol::{Envelope, Hello, MessageType, PROTOCOL_VERSION};
use crate::CccError;

pub const DEFAULT_PORT: u16 = 8700;
pub const DEFAULT_MAX_MESSAGE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccConfig {
    pub host: String,
    pub port: u16,
    /// Static shared token expected as `?token=` on the websocket URL.
    pub token: String,
    pub max_message_bytes: usize,
}

impl Default for CccConfig {
    fn default() -> Self {
        CccConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            token: "cage".into(),
            max_message_bytes: DEFAULT_MAX_MESSAGE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub run_id: Option<String>,
}

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    token: Arc<str>,
}

#[derive(Deserialize)]
struct WsQuery {
    token: Option<String>,
}

pub fn router(hub: Arc<Hub>, token: &str) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ws", get(ws_upgrade))
        .with_state(AppState {
            hub,
            token: token.into(),
        })
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        run_id: s.hub.run_id(),
    })
}

async fn ws_upgrade(
    State(s): State<AppState>,
    Query(q): Query<WsQuery>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    if q.token.as_deref() != Some(&*s.token) {
        return (StatusCode::UNAUTHORIZED, "missing or wrong token").into_response();
    }
    let ws = match ws {
        Ok(ws) => ws,
        Err(e) => return e.into_response(),
    };
    let max = s.hub.max_message_bytes();
    ws.max_message_size(max)
        .max_frame_size(max)
        .on_upgrade(move |socket| connection(socket, s.hub))
}

async fn connection(socket: WebSocket, hub: Arc<Hub>) {
    let (mut tx, mut rx) = socket.split();
    let mut seq = 0u64;
    let mut next_seq = || {
        seq += 1;
        seq - 1
    };
    let hello = Envelope::new(
        MessageType::Hello,
        next_seq(),
        hub.latest_tick(),
        Hello {
            protocol: PROTOCOL_VERSION,
            version: env!("CARGO_PKG_VERSION").into(),
            run_id: hub.run_id(),
        },
    );
    if tx.send(Message::Text(hello.to_line().into())).await.is_err() {
        return;
    }
    let mut frames = hub.subscribe();
    frames.mark_changed();
    let mut last_tick: Option<u64> = None;
    loop {
        tokio::select! {
            changed = frames.changed() => {
                if changed.is_err() {
                    break;
                }
                let Some(p) = frames.borrow_and_update().clone() else { continue };
                if last_tick.is_some_and(|t| p.tick <= t) {
                    continue;
                }
                last_tick = Some(p.tick);
                if tx.send(Message::Text(telemetry_line(next_seq(), &p).into())).await.is_err() {
                    break;
                }
            }
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let ack = hub.handle_text(text.as_str());
                    let line = Envelope::ack(next_seq(), hub.latest_tick(), &ack).to_line();
                    if tx.send(Message::Text(line.into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            }
        }
    }
    log::debug!("client disconnected");
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    hub: Arc<Hub>,
    token: &str,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), CccError> {
    axum::serve(listener, router(hub, token))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(CccError::Io)
}

pub async fn bind(cfg: &CccConfig) -> Result<TcpListener, CccError> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    TcpListener::bind(&addr)
        .await
        .map_err(|source| CccError::Bind { addr, source })
}

/// A server on its own runtime thread, for synchronous callers.
pub struct CccService {
    pub hub: Arc<Hub>,
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<(), CccError>>>,
}

impl CccService {
    /// Binds and starts serving. The receiver yields admitted commands in
    /// arrival order.
    pub fn start(
        cfg: &CccConfig,
        run_id: &str,
    ) -> Result<
        (
            CccService,
            std::sync::mpsc::Receiver<cage_core::command::OperatorCommand>,
        ),
        CccError,
    > {
        let (hub, commands) = Hub::new(cfg.max_message_bytes);
        hub.set_run_id(run_id);
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(CccError::Io)?;
        let listener = runtime.block_on(bind(cfg))?;
        let addr = listener.local_addr().map_err(CccError::Io)?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let (h, token) = (hub.clone(), cfg.token.clone());
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve(listener, h, &token, async {
                let _ = stopped.await;
            }))
        });
        log::info!("control center listening on {addr}");
        Ok((
            CccService {
                hub,
                addr,
                stop: Some(stop),
                thread: Some(thread),
            },
            commands,
        ))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> Result<(), CccError> {
        self.stop_now()
    }

    fn stop_now(&mut self) -> Result<(), CccError> {
        self.hub.close_commands();
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for CccService {
    fn drop(&mut self) {
        let _ = self.stop_now();
    }
}
