//! Smart City Manager: mirrors the bridge into an [`ScmDatabase`], serves it
//! over HTTP, forwards writes through the bridge, and optionally drives
//! vehicles along routes with the behavior planner.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use twinsim_client::{BridgeClient, ClientError};
use twinsim_core::protocol::{
    Code, Envelope, FrameFilter, Mode, MsgType, PeersPayload, Role, ScmEvent, Subscriptions,
};
use twinsim_core::scene::Pose2;
use twinsim_core::scm::api::{ApiError, ElementWriteAck, Health, ModeAck, ModeBody, StateBody};
use twinsim_core::scm::follower::{follow, FollowerParams};
use twinsim_core::scm::{plan, RuleSet, ScmDatabase};

use crate::ServerError;

/// A vehicle the SCM drives along `path`.
#[derive(Debug, Clone)]
pub struct DriveSpec {
    pub vehicle: String,
    pub path: Vec<[f64; 2]>,
    pub params: FollowerParams,
}

#[derive(Debug, Clone)]
pub struct ScmConfig {
    /// WebSocket URL of the bridge, e.g. `ws://127.0.0.1:7878/ws`.
    pub bridge_url: String,
    pub drive: Vec<DriveSpec>,
    pub rules: RuleSet,
    pub reconnect_delay: Duration,
}

impl ScmConfig {
    pub fn new(bridge_url: impl Into<String>) -> Self {
        Self {
            bridge_url: bridge_url.into(),
            drive: Vec::new(),
            rules: RuleSet::bundled(),
            reconnect_delay: Duration::from_millis(200),
        }
    }
}

type Db = Arc<RwLock<ScmDatabase>>;

enum Write {
    Light { element: String, state: String },
    Mode { vehicle: String, mode: Mode },
}

struct WriteRequest {
    write: Write,
    reply: oneshot::Sender<Result<serde_json::Value, ClientError>>,
}

#[derive(Clone)]
struct AppState {
    db: Db,
    connected: Arc<AtomicBool>,
    writes: mpsc::Sender<WriteRequest>,
}

pub struct ScmService {
    addr: SocketAddr,
    db: Db,
    connected: Arc<AtomicBool>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ScmService {
    pub async fn start(listener: TcpListener, cfg: ScmConfig) -> Result<ScmService, ServerError> {
        let addr = listener.local_addr()?;
        let db: Db = Arc::default();
        let connected = Arc::new(AtomicBool::new(false));
        let (stop, stop_rx) = watch::channel(false);
        let (writes_tx, writes_rx) = mpsc::channel(64);
        let mut tasks = vec![tokio::spawn(sync_loop(
            cfg.bridge_url.clone(),
            cfg.reconnect_delay,
            db.clone(),
            connected.clone(),
            writes_rx,
            stop_rx.clone(),
        ))];
        for spec in cfg.drive {
            tasks.push(tokio::spawn(drive_loop(
                cfg.bridge_url.clone(),
                cfg.reconnect_delay,
                spec,
                cfg.rules.clone(),
                db.clone(),
                stop_rx.clone(),
            )));
        }

        let state = AppState {
            db: db.clone(),
            connected: connected.clone(),
            writes: writes_tx,
        };
        let app = Router::new()
            .route("/health", get(health))
            .route("/vehicles", get(vehicles))
            .route("/vehicles/{id}", get(vehicle))
            .route("/vehicles/{id}/mode", put(set_mode).post(set_mode))
            .route("/elements", get(elements))
            .route("/elements/{id}", get(element))
            .route("/elements/{id}/state", put(set_state).post(set_state))
            .route("/events", get(events))
            .with_state(state);
        let mut stop_http = stop_rx;
        tasks.push(tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async move {
                let _ = stop_http.wait_for(|s| *s).await;
            });
            if let Err(e) = serve.await {
                tracing::error!("scm http server failed: {e}");
            }
        }));
        tracing::info!(%addr, "scm listening");
        Ok(ScmService {
            addr,
            db,
            connected,
            stop,
            tasks,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Consistent copy of the database.
    pub fn database(&self) -> ScmDatabase {
        self.db.read().expect("poisoned").clone()
    }

    pub fn is_connected(&self) -> bool {
        self.connected.load(Ordering::Acquire)
    }

    /// Waits until the sync loop holds a live bridge connection.
    pub async fn wait_connected(&self, timeout: Duration) -> bool {
        let deadline = tokio::time::Instant::now() + timeout;
        while !self.is_connected() {
            if tokio::time::Instant::now() >= deadline {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        true
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for t in self.tasks {
            t.abort();
            let _ = t.await;
        }
    }
}

fn apply(db: &Db, e: &Envelope) {
    match e.kind {
        MsgType::Peers => match e.payload_as::<PeersPayload>() {
            Ok(p) => db.write().expect("poisoned").apply_peers(&p),
            Err(err) => tracing::warn!("bad PEERS payload: {err}"),
        },
        MsgType::ScmEvent => match e.payload_as::<ScmEvent>() {
            Ok(ev) => db.write().expect("poisoned").apply_event(&ev),
            Err(err) => tracing::warn!("bad SCM_EVENT payload: {err}"),
        },
        _ => {}
    }
}

async fn perform(client: &mut BridgeClient, write: Write) -> Result<serde_json::Value, ClientError> {
    let ack = match write {
        Write::Light { element, state } => client.set_light(&element, &state).await?,
        Write::Mode { vehicle, mode } => client.set_mode(&vehicle, mode).await?,
    };
    Ok(ack.data)
}

async fn sync_loop(
    url: String,
    delay: Duration,
    db: Db,
    connected: Arc<AtomicBool>,
    mut writes: mpsc::Receiver<WriteRequest>,
    mut stop: watch::Receiver<bool>,
) {
    let subscribe = Subscriptions {
        frames: FrameFilter::None,
        peers: true,
        events: true,
    };
    loop {
        if *stop.borrow() {
            return;
        }
        let mut client = match BridgeClient::connect(&url, Role::Scm, None, subscribe.clone()).await {
            Ok(c) => c,
            Err(e) => {
                tracing::debug!("bridge unavailable: {e}");
                reject_pending(&mut writes);
                tokio::select! {
                    _ = stopped(&mut stop) => return,
                    _ = tokio::time::sleep(delay) => continue,
                }
            }
        };
        db.write().expect("poisoned").apply_snapshot(client.snapshot());
        connected.store(true, Ordering::Release);
        tracing::info!("scm synced with bridge");
        loop {
            tokio::select! {
                _ = stopped(&mut stop) => return,
                m = client.next() => match m {
                    Some(e) => apply(&db, &e),
                    None => break,
                },
                Some(req) = writes.recv() => {
                    let result = perform(&mut client, req.write).await;
                    // The bridge sends a write's event before its ACK.
                    while let Some(e) = client.try_next() {
                        apply(&db, &e);
                    }
                    let lost = matches!(result, Err(ClientError::Closed | ClientError::Timeout));
                    let _ = req.reply.send(result);
                    if lost {
                        break;
                    }
                }
            }
        }
        connected.store(false, Ordering::Release);
        db.write().expect("poisoned").mark_stale();
        tracing::warn!("lost bridge connection; retrying");
    }
}

fn reject_pending(writes: &mut mpsc::Receiver<WriteRequest>) {
    while let Ok(req) = writes.try_recv() {
        let _ = req.reply.send(Err(ClientError::Closed));
    }
}

async fn drive_loop(
    url: String,
    delay: Duration,
    spec: DriveSpec,
    rules: RuleSet,
    db: Db,
    mut stop: watch::Receiver<bool>,
) {
    let subscribe = Subscriptions {
        frames: FrameFilter::None,
        peers: true,
        events: false,
    };
    loop {
        let mut client =
            match BridgeClient::connect(&url, Role::VehicleController, Some(&spec.vehicle), subscribe.clone()).await {
                Ok(c) => c,
                Err(e) => {
                    tracing::debug!(vehicle = %spec.vehicle, "driver cannot attach: {e}");
                    tokio::select! {
                        _ = stopped(&mut stop) => return,
                        _ = tokio::time::sleep(delay) => continue,
                    }
                }
            };
        loop {
            let m = tokio::select! {
                _ = stopped(&mut stop) => return,
                m = client.next() => m,
            };
            let Some(e) = m else { break };
            if e.kind != MsgType::Peers {
                continue;
            }
            let Ok(p) = e.payload_as::<PeersPayload>() else { continue };
            let Some(me) = p.peers.iter().find(|v| v.vehicle_id == spec.vehicle) else {
                continue;
            };
            let pose = Pose2::new(me.position[0], me.position[1], me.yaw);
            let out = match follow(pose, me.velocity, &spec.path, &spec.params) {
                Ok(o) => o,
                Err(err) => {
                    tracing::error!(vehicle = %spec.vehicle, "cannot follow path: {err}");
                    return;
                }
            };
            let cmd = {
                let db = db.read().expect("poisoned");
                plan(me.position, out.command, &db, &rules)
            };
            let env = Envelope::new(
                MsgType::Cmd,
                &twinsim_core::protocol::CmdPayload {
                    throttle: cmd.throttle,
                    steering: cmd.steering,
                },
            )
            .vehicle(spec.vehicle.clone());
            if client.send(env).is_err() {
                break;
            }
            if out.done {
                tracing::info!(vehicle = %spec.vehicle, "route complete");
                // Stay attached so nobody else takes the parked vehicle.
                stopped(&mut stop).await;
                return;
            }
        }
        tokio::select! {
            _ = stopped(&mut stop) => return,
            _ = tokio::time::sleep(delay) => {}
        }
    }
}

struct HttpError(StatusCode, ApiError);

impl HttpError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self(
            status,
            ApiError {
                code: code.into(),
                message: message.into(),
            },
        )
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<ClientError> for HttpError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Rejected { code, message } => {
                let status = match code {
                    Code::UnknownElement | Code::UnknownVehicle => StatusCode::NOT_FOUND,
                    Code::InvalidState => StatusCode::UNPROCESSABLE_ENTITY,
                    Code::BadMessage => StatusCode::BAD_REQUEST,
                    Code::NotPermitted => StatusCode::FORBIDDEN,
                    _ => StatusCode::CONFLICT,
                };
                HttpError::new(status, code.as_str(), message)
            }
            ClientError::Closed | ClientError::Timeout => {
                HttpError::new(StatusCode::SERVICE_UNAVAILABLE, "BRIDGE_UNAVAILABLE", e.to_string())
            }
            other => HttpError::new(StatusCode::BAD_GATEWAY, "BRIDGE_ERROR", other.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, HttpError>;

async fn health(State(app): State<AppState>) -> Json<Health> {
    let db = app.db.read().expect("poisoned");
    Json(Health {
        connected: app.connected.load(Ordering::Acquire),
        stale: db.stale,
        tick: db.tick,
        time: db.time,
        vehicles: db.vehicles.len(),
        elements: db.elements.len(),
    })
}

async fn vehicles(State(app): State<AppState>) -> Json<Vec<twinsim_core::scm::VehicleRecord>> {
    Json(app.db.read().expect("poisoned").vehicles.values().cloned().collect())
}

async fn vehicle(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<twinsim_core::scm::VehicleRecord> {
    app.db
        .read()
        .expect("poisoned")
        .vehicles
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| HttpError::new(StatusCode::NOT_FOUND, "UNKNOWN_VEHICLE", format!("no vehicle {id:?}")))
}

async fn elements(State(app): State<AppState>) -> Json<Vec<twinsim_core::scm::ElementRecord>> {
    Json(app.db.read().expect("poisoned").elements.values().cloned().collect())
}

async fn element(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<twinsim_core::scm::ElementRecord> {
    app.db
        .read()
        .expect("poisoned")
        .elements
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| HttpError::new(StatusCode::NOT_FOUND, "UNKNOWN_ELEMENT", format!("no element {id:?}")))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: f64,
}

async fn events(
    State(app): State<AppState>,
    Query(q): Query<EventsQuery>,
) -> Json<Vec<twinsim_core::scm::LogEntry>> {
    Json(app.db.read().expect("poisoned").events_since(q.since))
}

async fn forward(app: &AppState, write: Write) -> Result<serde_json::Value, HttpError> {
    if !app.connected.load(Ordering::Acquire) {
        return Err(HttpError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "BRIDGE_UNAVAILABLE",
            "not connected to the bridge",
        ));
    }
    let (tx, rx) = oneshot::channel();
    app.writes
        .send(WriteRequest { write, reply: tx })
        .await
        .map_err(|_| ClientError::Closed)?;
    Ok(rx.await.map_err(|_| ClientError::Closed)??)
}

fn decode<T: for<'de> Deserialize<'de>>(v: serde_json::Value) -> ApiResult<T> {
    serde_json::from_value(v)
        .map(Json)
        .map_err(|e| HttpError::new(StatusCode::BAD_GATEWAY, "BRIDGE_ERROR", e.to_string()))
}

async fn set_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<StateBody>,
) -> ApiResult<ElementWriteAck> {
    let data = forward(
        &app,
        Write::Light {
            element: id,
            state: body.state,
        },
    )
    .await?;
    decode(data)
}

async fn set_mode(State(app): State<AppState>, Path(id): Path<String>, Json(body): Json<ModeBody>) -> ApiResult<ModeAck> {
    let mode = match body.mode.as_str() {
        "manual" => Mode::Manual,
        "autonomous" => Mode::Autonomous,
        other => {
            return Err(HttpError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "INVALID_STATE",
                format!("unknown mode {other:?}; expected manual or autonomous"),
            ))
        }
    };
    let data = forward(&app, Write::Mode { vehicle: id, mode }).await?;
    decode(data)
}

async fn stopped(stop: &mut watch::Receiver<bool>) {
    let _ = stop.wait_for(|s| *s).await;
}
