use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;
use twinsim_core::env::{AgentObservation, EnvStepResult, Scenario};
use twinsim_core::protocol::{
    AckPayload, CmdPayload, ElementWrite, Envelope, ErrPayload, Hello, Mode, ModePayload, MsgType, RecordAction,
    RecordPayload, Role, SessionSnapshot, StepPayload, Subscriptions,
};

use crate::ClientError;

type Pending = Arc<Mutex<BTreeMap<u64, oneshot::Sender<Envelope>>>>;

const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

/// One WebSocket session with the bridge.
///
/// Requests carry a sequence number; their ACK or ERR resolves the matching
/// call. Everything else (frames, peers, events) queues for [`next`].
///
/// [`next`]: BridgeClient::next
pub struct BridgeClient {
    out: mpsc::UnboundedSender<Message>,
    pending: Pending,
    inbox: mpsc::UnboundedReceiver<Envelope>,
    seq: u64,
    vehicle: Option<String>,
    snapshot: SessionSnapshot,
}

fn reply_seq(e: &Envelope) -> Option<u64> {
    matches!(e.kind, MsgType::Ack | MsgType::Err).then_some(e.seq).flatten()
}

impl BridgeClient {
    /// Connects and completes the HELLO handshake. Controllers must name
    /// their vehicle.
    pub async fn connect(
        url: &str,
        role: Role,
        vehicle: Option<&str>,
        subscribe: Subscriptions,
    ) -> Result<Self, ClientError> {
        let (ws, _) = tokio_tungstenite::connect_async(url).await?;
        let (mut sink, mut stream) = ws.split();
        let mut hello = Envelope::new(
            MsgType::Hello,
            &Hello {
                role,
                subscribe,
                protocol: Some(twinsim_core::protocol::PROTOCOL_VERSION),
            },
        )
        .seq(0);
        hello.vehicle_id = vehicle.map(str::to_string);
        sink.send(Message::text(hello.to_json())).await?;

        let snapshot = loop {
            let msg = tokio::time::timeout(REPLY_TIMEOUT, stream.next())
                .await
                .map_err(|_| ClientError::Timeout)?
                .ok_or(ClientError::Closed)??;
            let Message::Text(text) = msg else { continue };
            let env = Envelope::parse(&text).map_err(|e| ClientError::Protocol(e.to_string()))?;
            match env.kind {
                MsgType::Hello => {
                    break env
                        .payload_as::<SessionSnapshot>()
                        .map_err(|e| ClientError::Protocol(e.message))?
                }
                MsgType::Err => {
                    let e: ErrPayload = env.payload_as().map_err(|e| ClientError::Protocol(e.message))?;
                    return Err(ClientError::Rejected {
                        code: e.code,
                        message: e.message,
                    });
                }
                other => return Err(ClientError::Protocol(format!("expected HELLO, got {other:?}"))),
            }
        };

        let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Message>();
        tokio::spawn(async move {
            while let Some(m) = out_rx.recv().await {
                if sink.send(m).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });

        let pending: Pending = Arc::default();
        let (in_tx, inbox) = mpsc::unbounded_channel();
        let waiters = pending.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                let Message::Text(text) = msg else { continue };
                let env = match Envelope::parse(&text) {
                    Ok(e) => e,
                    Err(e) => {
                        tracing::warn!("dropping undecodable message: {e}");
                        continue;
                    }
                };
                let waiter = reply_seq(&env).and_then(|s| waiters.lock().expect("poisoned").remove(&s));
                match waiter {
                    Some(w) => {
                        let _ = w.send(env);
                    }
                    None => {
                        if in_tx.send(env).is_err() {
                            break;
                        }
                    }
                }
            }
            // Dropping the senders fails every outstanding request.
            waiters.lock().expect("poisoned").clear();
        });

        Ok(Self {
            out: out_tx,
            pending,
            inbox,
            seq: 0,
            vehicle: vehicle.map(str::to_string),
            snapshot,
        })
    }

    /// State of the session at handshake time.
    pub fn snapshot(&self) -> &SessionSnapshot {
        &self.snapshot
    }

    pub fn client_id(&self) -> u64 {
        self.snapshot.client_id
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Sends without waiting; the reply, if any, arrives through [`next`].
    ///
    /// [`next`]: BridgeClient::next
    pub fn send(&mut self, env: Envelope) -> Result<u64, ClientError> {
        let seq = self.next_seq();
        self.out
            .send(Message::text(env.seq(seq).to_json()))
            .map_err(|_| ClientError::Closed)?;
        Ok(seq)
    }

    /// Sends and waits for the matching ACK; an ERR becomes `Rejected`.
    pub async fn request(&mut self, env: Envelope) -> Result<AckPayload, ClientError> {
        let seq = self.next_seq();
        let (tx, rx) = oneshot::channel();
        self.pending.lock().expect("poisoned").insert(seq, tx);
        self.out
            .send(Message::text(env.seq(seq).to_json()))
            .map_err(|_| ClientError::Closed)?;
        let reply = tokio::time::timeout(REPLY_TIMEOUT, rx)
            .await
            .map_err(|_| ClientError::Timeout)?
            .map_err(|_| ClientError::Closed)?;
        match reply.kind {
            MsgType::Ack => reply.payload_as().map_err(|e| ClientError::Protocol(e.message)),
            _ => {
                let e: ErrPayload = reply.payload_as().map_err(|e| ClientError::Protocol(e.message))?;
                Err(ClientError::Rejected {
                    code: e.code,
                    message: e.message,
                })
            }
        }
    }

    /// Next server-pushed message, or `None` once the connection is gone.
    pub async fn next(&mut self) -> Option<Envelope> {
        self.inbox.recv().await
    }

    pub fn try_next(&mut self) -> Option<Envelope> {
        self.inbox.try_recv().ok()
    }

    /// Next message of `kind`, skipping everything else.
    pub async fn next_of(&mut self, kind: MsgType) -> Option<Envelope> {
        while let Some(e) = self.next().await {
            if e.kind == kind {
                return Some(e);
            }
        }
        None
    }

    /// Drive command for the controlled vehicle, or for `vehicle` in manual mode.
    pub async fn cmd(&mut self, vehicle: Option<&str>, throttle: f64, steering: f64) -> Result<AckPayload, ClientError> {
        let mut e = Envelope::new(MsgType::Cmd, &CmdPayload { throttle, steering });
        e.vehicle_id = vehicle.map(str::to_string).or_else(|| self.vehicle.clone());
        self.request(e).await
    }

    pub async fn set_mode(&mut self, vehicle: &str, mode: Mode) -> Result<AckPayload, ClientError> {
        self.request(Envelope::new(MsgType::Mode, &ModePayload { mode }).vehicle(vehicle))
            .await
    }

    pub async fn set_light(&mut self, element: &str, state: &str) -> Result<AckPayload, ClientError> {
        let w = ElementWrite {
            element: element.into(),
            state: state.into(),
        };
        self.request(Envelope::new(MsgType::ScmEvent, &w)).await
    }

    pub async fn reset(&mut self) -> Result<AckPayload, ClientError> {
        self.request(Envelope::new(MsgType::Reset, &json!({}))).await
    }

    pub async fn record(&mut self, action: RecordAction) -> Result<AckPayload, ClientError> {
        self.request(Envelope::new(MsgType::Record, &RecordPayload { action }))
            .await
    }

    /// Stopped recording as CSV text.
    pub async fn export(&mut self) -> Result<String, ClientError> {
        let ack = self.record(RecordAction::Export).await?;
        ack.data["csv"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("export reply without csv".into()))
    }

    /// Advances a lockstep session by `ticks`.
    pub async fn step(&mut self, ticks: u64) -> Result<AckPayload, ClientError> {
        self.request(Envelope::new(MsgType::Step, &StepPayload { ticks })).await
    }

    pub async fn env_reset(&mut self, scenario: Scenario, seed: u64) -> Result<Vec<AgentObservation>, ClientError> {
        let ack = self
            .request(Envelope::new(MsgType::EnvReset, &json!({ "scenario": scenario, "seed": seed })))
            .await?;
        serde_json::from_value(ack.data["observations"].clone()).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn env_step(&mut self, actions: &[i8]) -> Result<EnvStepResult, ClientError> {
        let ack = self
            .request(Envelope::new(MsgType::EnvStep, &json!({ "actions": actions })))
            .await?;
        serde_json::from_value(ack.data).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// Closes the socket; outstanding requests fail with `Closed`.
    pub fn close(self) {
        let _ = self.out.send(Message::Close(None));
    }
}
