//! Websocket front-end for live supervision sessions.
//!
//! Each websocket connection runs one participant through the full study
//! protocol. Frames are JSON text in both directions: [`ClientMessage`] in,
//! [`ServerMessage`] out. Finished session logs are written to the data
//! directory as they complete; a disconnect closes the running session as
//! aborted.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::time::{Instant, MissedTickBehavior};
use tower_http::services::ServeDir;

use trustbench::store::{session_file_name, SessionLog, PRACTICE_SESSION, TEST_SESSION};
use trustbench::study::{ClientMessage, Phase, ServerMessage, StudyConfig, StudySession, DISPLAY_RATE_HZ};
use trustbench::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Upper bound on simulation steps run in one catch-up burst.
const MAX_CATCH_UP_STEPS: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Directory served at `/` (the browser bundle), if any.
    pub static_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Outbound `state_update` rate, wall-clock Hz.
    pub display_rate_hz: f64,
    /// Template for every participant; `member_id` and `seed` are replaced
    /// per connection.
    pub study: StudyConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            static_dir: None,
            time_scale: 1.0,
            display_rate_hz: DISPLAY_RATE_HZ,
            study: StudyConfig::new(""),
        }
    }

    pub fn validate(&self) -> trustbench::Result<()> {
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::Config(format!(
                "time scale must be positive, got {}",
                self.time_scale
            )));
        }
        if !(self.display_rate_hz.is_finite() && self.display_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "display rate must be positive, got {}",
                self.display_rate_hz
            )));
        }
        StudySession::new(self.study.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub version: String,
    pub active_sessions: usize,
}

struct AppState {
    cfg: ServiceConfig,
    active: AtomicUsize,
    connections: AtomicU64,
}

/// Counts a connection as active for as long as it lives.
struct ActiveGuard<'a>(&'a AtomicUsize);

impl<'a> ActiveGuard<'a> {
    fn new(counter: &'a AtomicUsize) -> Self {
        counter.fetch_add(1, Ordering::SeqCst);
        Self(counter)
    }
}

impl Drop for ActiveGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Routes: `/ws` (one study per connection), `/health`, and static files.
pub fn router(cfg: ServiceConfig) -> trustbench::Result<Router> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.data_dir)?;
    let static_dir = cfg.static_dir.clone();
    let state = Arc::new(AppState {
        cfg,
        active: AtomicUsize::new(0),
        connections: AtomicU64::new(0),
    });
    let app = Router::new()
        .route("/health", get(health))
        .route("/ws", get(ws_upgrade))
        .with_state(state);
    Ok(match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    })
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, cfg: ServiceConfig) -> std::io::Result<()> {
    let app = router(cfg).map_err(std::io::Error::other)?;
    axum::serve(listener, app).await
}

/// Bind `addr` and serve. Returns the bound address through `ready` once
/// the socket is listening and the data directory exists.
pub async fn bind_and_serve(
    addr: SocketAddr,
    cfg: ServiceConfig,
    ready: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let app = router(cfg).map_err(std::io::Error::other)?;
    let listener = TcpListener::bind(addr).await?;
    ready(listener.local_addr()?);
    axum::serve(listener, app).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        version: VERSION.to_string(),
        active_sessions: state.active.load(Ordering::SeqCst),
    })
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    member: Option<String>,
    seed: Option<u64>,
}

fn valid_member_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn has_logs(dir: &Path, member: &str) -> bool {
    (PRACTICE_SESSION..=TEST_SESSION).any(|s| dir.join(session_file_name(member, s)).exists())
}

async fn ws_upgrade(
    ws: WebSocketUpgrade,
    Query(query): Query<WsQuery>,
    State(state): State<Arc<AppState>>,
) -> Response {
    let n = state.connections.fetch_add(1, Ordering::SeqCst);
    let member = query.member.unwrap_or_else(|| format!("p{n:04}"));
    if !valid_member_id(&member) {
        return (
            StatusCode::BAD_REQUEST,
            "member id must be 1-64 characters of [A-Za-z0-9_-]",
        )
            .into_response();
    }
    if has_logs(&state.cfg.data_dir, &member) {
        return (
            StatusCode::CONFLICT,
            format!("member {member} already has session logs"),
        )
            .into_response();
    }
    let mut study = state.cfg.study.clone();
    study.member_id = member;
    study.seed = query.seed.unwrap_or(state.cfg.study.seed.wrapping_add(n));
    ws.on_upgrade(move |socket| run_connection(socket, state, study))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize").into())
}

async fn persist(dir: PathBuf, logs: Vec<SessionLog>) {
    if logs.is_empty() {
        return;
    }
    let written = tokio::task::spawn_blocking(move || {
        logs.iter()
            .map(|log| {
                let path = dir.join(log.file_name());
                log.save(&path).map(|()| path)
            })
            .collect::<Vec<_>>()
    })
    .await;
    match written {
        Ok(results) => {
            for r in results {
                match r {
                    Ok(path) => tracing::info!(path = %path.display(), "session log written"),
                    Err(e) => tracing::error!(error = %e, "failed to write session log"),
                }
            }
        }
        Err(e) => tracing::error!(error = %e, "log writer panicked"),
    }
}

async fn run_connection(socket: WebSocket, state: Arc<AppState>, study: StudyConfig) {
    let _active = ActiveGuard::new(&state.active);
    let member = study.member_id.clone();
    tracing::info!(member = %member, "participant connected");
    let (mut tx, mut rx) = socket.split();
    let mut session = match StudySession::new(study) {
        Ok(s) => s,
        Err(e) => {
            let _ = tx.send(encode(&ServerMessage::Error { message: e.to_string() })).await;
            return;
        }
    };
    let cfg = &state.cfg;
    let dt = session.config().domain.dt;
    let step_wall = Duration::from_secs_f64(dt / cfg.time_scale);
    let display_wall = Duration::from_secs_f64(1.0 / cfg.display_rate_hz);
    let poll_wall = step_wall.min(display_wall).max(Duration::from_millis(1));

    let start = Instant::now();
    let mut steps_done: u64 = 0;
    let mut clock = tokio::time::interval(poll_wall);
    clock.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut display = tokio::time::interval(display_wall);
    display.set_missed_tick_behavior(MissedTickBehavior::Skip);

    if tx.send(encode(&session.state_update())).await.is_err() {
        return;
    }
    loop {
        let mut out = Vec::new();
        let mut disconnected = false;
        tokio::select! {
            frame = rx.next() => match frame {
                Some(Ok(Message::Text(text))) => match text.parse::<ClientMessage>() {
                    Ok(msg) => match session.handle(msg) {
                        Ok(replies) => {
                            out.extend(replies);
                            out.push(session.state_update());
                        }
                        Err(e) => out.push(ServerMessage::Error { message: e.to_string() }),
                    },
                    Err(e) => out.push(ServerMessage::Error { message: format!("malformed message: {e}") }),
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => disconnected = true,
                Some(Ok(_)) => {}
            },
            _ = clock.tick() => {
                let due = ((start.elapsed().as_secs_f64() * cfg.time_scale / dt).floor() as u64)
                    .min(steps_done + MAX_CATCH_UP_STEPS);
                while steps_done < due {
                    steps_done += 1;
                    match session.tick() {
                        Ok(msgs) => {
                            let finished = msgs.iter().any(|m| matches!(m, ServerMessage::SessionComplete { .. }));
                            out.extend(msgs);
                            if finished {
                                // Show the new phase without waiting for the display clock.
                                out.push(session.state_update());
                            }
                        }
                        Err(e) => {
                            tracing::error!(member = %member, error = %e, "session step failed");
                            out.push(ServerMessage::Error { message: e.to_string() });
                            match session.abort() {
                                Ok(msgs) => out.extend(msgs),
                                Err(e) => tracing::error!(error = %e, "abort failed"),
                            }
                            break;
                        }
                    }
                }
            },
            _ = display.tick() => out.push(session.state_update()),
        }
        if disconnected {
            if let Err(e) = session.abort() {
                tracing::error!(member = %member, error = %e, "abort failed");
            }
        }
        let logs = session.take_completed().into_iter().map(|(log, _)| log).collect();
        persist(cfg.data_dir.clone(), logs).await;
        if disconnected {
            tracing::info!(member = %member, "participant disconnected");
            return;
        }
        for msg in &out {
            if tx.send(encode(msg)).await.is_err() {
                let _ = session.abort();
                let logs = session.take_completed().into_iter().map(|(log, _)| log).collect();
                persist(cfg.data_dir.clone(), logs).await;
                return;
            }
        }
        if session.phase() == Phase::Done {
            let _ = tx.send(Message::Close(None)).await;
            tracing::info!(member = %member, "study complete");
            return;
        }
    }
}
