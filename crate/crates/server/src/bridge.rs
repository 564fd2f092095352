//! WebSocket bridge: one simulation task owns the [`Session`]; connection
//! tasks feed it through a queue and drain their own [`Outbox`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use twinsim_core::protocol::{err, Code, Envelope, MsgType, ProtocolError};
use twinsim_core::session::{Broadcast, ClientId, Outcome, Session, SessionConfig};

use crate::outbox::Outbox;
use crate::ServerError;

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const TICK_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// One tick per `dt` of wall time.
    Realtime,
    /// Ticks back to back, as fast as the host allows.
    Unpaced,
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub session: SessionConfig,
    /// Ignored for lockstep sessions, which only advance on STEP.
    pub pacing: Pacing,
    /// Per-client queue length before frames start being shed.
    pub outbox_capacity: usize,
    /// Stop advancing after this many ticks; the bridge keeps serving.
    pub max_ticks: Option<u64>,
    /// Start the recorder before the first tick.
    pub record: bool,
}

impl BridgeConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self {
            session,
            pacing: Pacing::Realtime,
            outbox_capacity: 256,
            max_ticks: None,
            record: false,
        }
    }
}

/// Counters shared between the simulation task and the HTTP endpoints.
#[derive(Debug, Default)]
pub struct Metrics {
    ticks: AtomicU64,
    messages_out: AtomicU64,
    dropped: Arc<AtomicU64>,
    clients: AtomicUsize,
    tick_nanos: Mutex<Vec<u64>>,
    started: Mutex<Option<Instant>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub ticks: u64,
    pub messages_out: u64,
    pub dropped: u64,
    pub clients: usize,
    /// Ticks per second of wall time since the first tick.
    pub tick_rate: f64,
    pub tick_mean_us: f64,
    pub tick_max_us: f64,
}

impl Metrics {
    fn record_tick(&self, took: Duration) {
        self.ticks.fetch_add(1, Ordering::Relaxed);
        self.started.lock().expect("poisoned").get_or_insert_with(Instant::now);
        let mut v = self.tick_nanos.lock().expect("poisoned");
        if v.len() == TICK_SAMPLES {
            v.remove(0);
        }
        v.push(took.as_nanos() as u64);
    }

    /// Wall-clock cost of each recent tick, including frame fan-out.
    pub fn tick_durations(&self) -> Vec<Duration> {
        self.tick_nanos
            .lock()
            .expect("poisoned")
            .iter()
            .map(|n| Duration::from_nanos(*n))
            .collect()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let ticks = self.ticks.load(Ordering::Relaxed);
        let samples = self.tick_nanos.lock().expect("poisoned").clone();
        let mean = if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<u64>() as f64 / samples.len() as f64 / 1e3
        };
        let max = samples.iter().copied().max().unwrap_or(0) as f64 / 1e3;
        let elapsed = self
            .started
            .lock()
            .expect("poisoned")
            .map_or(0.0, |s| s.elapsed().as_secs_f64());
        MetricsSnapshot {
            ticks,
            messages_out: self.messages_out.load(Ordering::Relaxed),
            dropped: self.dropped(),
            clients: self.clients.load(Ordering::Relaxed),
            tick_rate: if elapsed > 0.0 { ticks as f64 / elapsed } else { 0.0 },
            tick_mean_us: mean,
            tick_max_us: max,
        }
    }
}

enum Ingress {
    Connect {
        hello: Envelope,
        outbox: Arc<Outbox>,
        reply: oneshot::Sender<Result<ClientId, ProtocolError>>,
    },
    Message {
        client: ClientId,
        envelope: Envelope,
    },
    Disconnect {
        client: ClientId,
    },
}

#[derive(Clone)]
struct AppState {
    ingress: mpsc::Sender<Ingress>,
    metrics: Arc<Metrics>,
    outbox_capacity: usize,
}

/// A running bridge. Dropping it leaves the tasks running; call
/// [`Bridge::shutdown`] to stop them and get the session back.
pub struct Bridge {
    addr: SocketAddr,
    metrics: Arc<Metrics>,
    stop: watch::Sender<bool>,
    finished: watch::Receiver<bool>,
    sim: JoinHandle<Result<Session, ServerError>>,
    http: JoinHandle<()>,
}

impl Bridge {
    pub async fn start(listener: TcpListener, cfg: BridgeConfig) -> Result<Bridge, ServerError> {
        let mut session = Session::new(cfg.session.clone())?;
        if cfg.record {
            session.start_recording()?;
        }
        let addr = listener.local_addr()?;
        let metrics = Arc::new(Metrics::default());
        let (ingress_tx, ingress_rx) = mpsc::channel(4096);
        let (stop_tx, stop_rx) = watch::channel(false);
        let (finished_tx, finished_rx) = watch::channel(false);

        let sim = tokio::spawn(sim_loop(
            session,
            ingress_rx,
            cfg.clone(),
            metrics.clone(),
            stop_rx.clone(),
            finished_tx,
        ));

        let state = AppState {
            ingress: ingress_tx,
            metrics: metrics.clone(),
            outbox_capacity: cfg.outbox_capacity,
        };
        let app = Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/health", get(health))
            .route("/metrics", get(metrics_handler))
            .with_state(state);
        let mut stop_http = stop_rx;
        let http = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async move {
                let _ = stop_http.wait_for(|s| *s).await;
            });
            if let Err(e) = serve.await {
                tracing::error!("bridge http server failed: {e}");
            }
        });
        tracing::info!(%addr, "bridge listening");
        Ok(Bridge {
            addr,
            metrics,
            stop: stop_tx,
            finished: finished_rx,
            sim,
            http,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    pub fn metrics(&self) -> Arc<Metrics> {
        self.metrics.clone()
    }

    /// Resolves once `max_ticks` have run or the simulation task has ended.
    pub async fn finished(&mut self) {
        let _ = self.finished.wait_for(|f| *f).await;
    }

    /// Stops serving and returns the session for export or inspection.
    pub async fn shutdown(self) -> Result<Session, ServerError> {
        let _ = self.stop.send(true);
        let session = self.sim.await.map_err(|_| ServerError::TaskLost)?;
        // Open websockets would hold graceful shutdown forever.
        self.http.abort();
        session
    }
}

async fn health(State(app): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "ticks": app.metrics.ticks.load(Ordering::Relaxed) }))
}

async fn metrics_handler(State(app): State<AppState>) -> Json<MetricsSnapshot> {
    Json(app.metrics.snapshot())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client_connection(socket, app)).into_response()
}

fn text(e: &Envelope) -> Utf8Bytes {
    e.to_json().into()
}

async fn client_connection(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    let first = tokio::time::timeout(HANDSHAKE_TIMEOUT, async {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Text(t) => return Some(t),
                Message::Close(_) => return None,
                _ => {}
            }
        }
        None
    })
    .await;
    let Ok(Some(first)) = first else { return };
    let hello = match Envelope::parse(&first) {
        Ok(h) => h,
        Err(e) => {
            let e = ProtocolError::new(Code::BadHandshake, format!("undecodable HELLO: {e}"));
            let _ = sink.send(Message::Text(text(&err(Some(MsgType::Hello), &e, None)))).await;
            let _ = sink.close().await;
            return;
        }
    };
    let seq = hello.seq;
    let outbox = Arc::new(Outbox::new(app.outbox_capacity, app.metrics.dropped.clone()));
    let (reply_tx, reply_rx) = oneshot::channel();
    let connect = Ingress::Connect {
        hello,
        outbox: outbox.clone(),
        reply: reply_tx,
    };
    if app.ingress.send(connect).await.is_err() {
        return;
    }
    let client = match reply_rx.await {
        Ok(Ok(id)) => id,
        Ok(Err(e)) => {
            let _ = sink.send(Message::Text(text(&err(Some(MsgType::Hello), &e, seq)))).await;
            let _ = sink.close().await;
            return;
        }
        Err(_) => return,
    };
    app.metrics.clients.fetch_add(1, Ordering::Relaxed);

    let writer_box = outbox.clone();
    let writer = tokio::spawn(async move {
        while let Some(t) = writer_box.pop().await {
            if sink.send(Message::Text(t)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => match Envelope::parse(&t) {
                Ok(envelope) => {
                    if app.ingress.send(Ingress::Message { client, envelope }).await.is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let e = ProtocolError::new(Code::BadMessage, e.to_string());
                    outbox.push(text(&err(None, &e, None)), false);
                }
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = app.ingress.send(Ingress::Disconnect { client }).await;
    outbox.close();
    writer.abort();
    app.metrics.clients.fetch_sub(1, Ordering::Relaxed);
}

struct Fanout {
    outboxes: BTreeMap<ClientId, Arc<Outbox>>,
    metrics: Arc<Metrics>,
}

impl Fanout {
    fn replies(&self, to: ClientId, replies: &[Envelope]) {
        if let Some(o) = self.outboxes.get(&to) {
            for r in replies {
                o.push(text(r), false);
                self.metrics.messages_out.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    fn broadcasts(&self, session: &Session, broadcasts: &[Broadcast]) {
        for b in broadcasts {
            // Serialized once and shared by every recipient. Serializing even
            // with nobody listening keeps tick cost independent of clients.
            let t = text(b.envelope());
            let recipients = session.recipients(b);
            for id in recipients {
                if let Some(o) = self.outboxes.get(&id) {
                    o.push(t.clone(), b.is_droppable());
                    self.metrics.messages_out.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

impl Drop for Fanout {
    // Ending the simulation ends every connection.
    fn drop(&mut self) {
        for o in self.outboxes.values() {
            o.close();
        }
    }
}

fn handle_ingress(session: &mut Session, fan: &mut Fanout, msg: Ingress) -> Result<(), ServerError> {
    match msg {
        Ingress::Connect { hello, outbox, reply } => match session.connect(&hello) {
            Ok((id, Outcome { replies, broadcasts })) => {
                fan.outboxes.insert(id, outbox);
                // HELLO reply first so the snapshot precedes any traffic.
                fan.replies(id, &replies);
                fan.broadcasts(session, &broadcasts);
                if reply.send(Ok(id)).is_err() {
                    let out = session.disconnect(id);
                    fan.outboxes.remove(&id);
                    fan.broadcasts(session, &out.broadcasts);
                }
            }
            Err(e) => {
                let _ = reply.send(Err(e));
            }
        },
        Ingress::Message { client, envelope } => {
            let out = session.handle(client, &envelope);
            // Broadcasts first: an ACK then implies its events were delivered.
            fan.broadcasts(session, &out.broadcasts);
            fan.replies(client, &out.replies);
        }
        Ingress::Disconnect { client } => {
            let out = session.disconnect(client);
            fan.outboxes.remove(&client);
            fan.broadcasts(session, &out.broadcasts);
        }
    }
    Ok(())
}

async fn sim_loop(
    mut session: Session,
    mut ingress: mpsc::Receiver<Ingress>,
    cfg: BridgeConfig,
    metrics: Arc<Metrics>,
    mut stop: watch::Receiver<bool>,
    finished: watch::Sender<bool>,
) -> Result<Session, ServerError> {
    let mut fan = Fanout {
        outboxes: BTreeMap::new(),
        metrics: metrics.clone(),
    };
    let dt = Duration::from_secs_f64(cfg.session.world.dt);
    let mut interval = tokio::time::interval(dt);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut done = cfg.max_ticks == Some(0);
    if done {
        let _ = finished.send(true);
    }
    let free_running = !session.is_lockstep();

    loop {
        if !free_running || done {
            tokio::select! {
                _ = stop.wait_for(|s| *s) => break,
                m = ingress.recv() => match m {
                    Some(m) => handle_ingress(&mut session, &mut fan, m)?,
                    None => break,
                },
            }
            continue;
        }
        match cfg.pacing {
            Pacing::Realtime => {
                tokio::select! {
                    biased;
                    _ = stop.wait_for(|s| *s) => break,
                    m = ingress.recv() => {
                        match m {
                            Some(m) => handle_ingress(&mut session, &mut fan, m)?,
                            None => break,
                        }
                        continue;
                    }
                    _ = interval.tick() => {}
                }
            }
            Pacing::Unpaced => {
                if *stop.borrow() {
                    break;
                }
                tokio::task::yield_now().await;
            }
        }
        // Commands that arrived during the last tick take effect now.
        while let Ok(m) = ingress.try_recv() {
            handle_ingress(&mut session, &mut fan, m)?;
        }
        let started = Instant::now();
        let broadcasts = match session.advance() {
            Ok(b) => b,
            Err(e) => {
                tracing::error!("simulation fault: {e}");
                let _ = finished.send(true);
                return Err(e.into());
            }
        };
        fan.broadcasts(&session, &broadcasts);
        metrics.record_tick(started.elapsed());
        if cfg.max_ticks.is_some_and(|m| session.world().clock().ticks() >= m) {
            done = true;
            let _ = finished.send(true);
        }
    }
    let _ = finished.send(true);
    Ok(session)
}
