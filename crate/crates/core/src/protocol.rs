//! Wire messages shared by the bridge and its clients.
//!
//! Every message is one JSON object `{type, vehicle_id, seq, timestamp,
//! payload}`. Numbers are SI; LIDAR `∞` travels as `null`. The full schema
//! lives in `docs/protocol.md`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::vehicle::ActuationCommand;
use crate::scene::{ElementKind, ElementSnapshot, LightState};
use crate::sensors::SensorFrame;
use crate::world::PeerState;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgType {
    Hello,
    Frame,
    Peers,
    Cmd,
    Mode,
    Reset,
    Record,
    ScmEvent,
    Ack,
    Err,
    EnvReset,
    EnvStep,
    /// Lockstep sessions only: advance the simulation by `ticks`.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: MsgType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new<P: Serialize>(kind: MsgType, payload: &P) -> Self {
        Self {
            kind,
            vehicle_id: None,
            seq: None,
            timestamp: None,
            payload: serde_json::to_value(payload).expect("payload types serialize"),
        }
    }

    pub fn vehicle(mut self, id: impl Into<String>) -> Self {
        self.vehicle_id = Some(id.into());
        self
    }

    pub fn seq(mut self, seq: u64) -> Self {
        self.seq = Some(seq);
        self
    }

    pub fn at(mut self, t: f64) -> Self {
        self.timestamp = Some(t);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn payload_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, ProtocolError> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| ProtocolError::new(Code::BadMessage, format!("bad {:?} payload: {e}", self.kind)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Code {
    Ok,
    WarnClamped,
    Stale,
    NotController,
    ControlConflict,
    BadHandshake,
    BadMessage,
    UnknownVehicle,
    UnknownElement,
    InvalidState,
    NotPermitted,
    RecorderState,
    EnvError,
}

impl Code {
    pub fn as_str(&self) -> &'static str {
        match self {
            Code::Ok => "OK",
            Code::WarnClamped => "WARN_CLAMPED",
            Code::Stale => "STALE",
            Code::NotController => "NOT_CONTROLLER",
            Code::ControlConflict => "CONTROL_CONFLICT",
            Code::BadHandshake => "BAD_HANDSHAKE",
            Code::BadMessage => "BAD_MESSAGE",
            Code::UnknownVehicle => "UNKNOWN_VEHICLE",
            Code::UnknownElement => "UNKNOWN_ELEMENT",
            Code::InvalidState => "INVALID_STATE",
            Code::NotPermitted => "NOT_PERMITTED",
            Code::RecorderState => "RECORDER_STATE",
            Code::EnvError => "ENV_ERROR",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    pub code: Code,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    VehicleController,
    Observer,
    Scm,
    Ui,
}

impl Role {
    /// Roles allowed to change modes, lights, and the recorder.
    pub fn is_admin(&self) -> bool {
        matches!(self, Role::Scm | Role::Ui)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Manual,
    #[default]
    Autonomous,
}

/// Which vehicles' frames a client wants.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFilter {
    /// The controlled vehicle for controllers, every vehicle otherwise.
    #[default]
    Default,
    All,
    None,
    Only(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscriptions {
    #[serde(default)]
    pub frames: FrameFilter,
    #[serde(default = "yes")]
    pub peers: bool,
    #[serde(default = "yes")]
    pub events: bool,
}

fn yes() -> bool {
    true
}

impl Default for Subscriptions {
    fn default() -> Self {
        Self {
            frames: FrameFilter::Default,
            peers: true,
            events: true,
        }
    }
}

/// Client → server handshake. The vehicle id rides in the envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub role: Role,
    #[serde(default)]
    pub subscribe: Subscriptions,
    #[serde(default)]
    pub protocol: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementInfo {
    pub id: String,
    pub kind: ElementKind,
    pub state: Option<LightState>,
    pub version: u64,
    pub position: [f64; 2],
    pub detection_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub vehicle_id: String,
    pub mode: Mode,
    pub controlled: bool,
    pub peer: PeerState,
}

/// Full-state snapshot returned in the server's HELLO reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub protocol: u32,
    pub client_id: u64,
    pub scene: String,
    pub dt: f64,
    pub tick: u64,
    pub time: f64,
    pub sensor_rate: f64,
    pub lockstep: bool,
    pub recording: bool,
    pub vehicles: Vec<VehicleInfo>,
    pub elements: Vec<ElementInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmdPayload {
    pub throttle: f64,
    pub steering: f64,
}

impl From<CmdPayload> for ActuationCommand {
    fn from(c: CmdPayload) -> Self {
        ActuationCommand::new(c.throttle, c.steering)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModePayload {
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
    Export,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordPayload {
    pub action: RecordAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPayload {
    pub ticks: u64,
}

/// SCM_EVENT as sent by a client: a traffic-light write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementWrite {
    pub element: String,
    pub state: String,
}

/// SCM_EVENT as broadcast by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScmEvent {
    Element {
        element: String,
        state: LightState,
        version: u64,
        tick: u64,
    },
    Mode {
        vehicle_id: String,
        mode: Mode,
        tick: u64,
    },
    Reset {
        tick: u64,
    },
    Controller {
        vehicle_id: String,
        attached: bool,
        tick: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    pub code: Code,
    pub ack: MsgType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrPayload {
    pub code: Code,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<MsgType>,
}

/// FRAME payload: the sensor frame plus the element states it was taken with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    #[serde(flatten)]
    pub frame: SensorFrame,
    pub elements: BTreeMap<String, ElementSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeersPayload {
    pub tick: u64,
    pub peers: Vec<PeerState>,
}

pub fn ack(kind: MsgType, code: Code, seq: Option<u64>, detail: Option<String>, data: Value) -> Envelope {
    let mut e = Envelope::new(
        MsgType::Ack,
        &AckPayload {
            code,
            ack: kind,
            detail,
            data,
        },
    );
    e.seq = seq;
    e
}

pub fn err(request: Option<MsgType>, error: &ProtocolError, seq: Option<u64>) -> Envelope {
    let mut e = Envelope::new(
        MsgType::Err,
        &ErrPayload {
            code: error.code,
            message: error.message.clone(),
            request,
        },
    );
    e.seq = seq;
    e
}
