//! JSON bodies of the SCM HTTP API, shared by the service and its clients.

use serde::{Deserialize, Serialize};

use crate::protocol::Mode;
use crate::scene::LightState;

/// `PUT /elements/{id}/state`. The state stays a string so an invalid value
/// reaches validation instead of failing body extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBody {
    pub state: String,
}

/// `PUT /vehicles/{id}/mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBody {
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementWriteAck {
    pub element: String,
    pub state: LightState,
    pub version: u64,
    /// Tick at which the write was applied.
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAck {
    pub vehicle_id: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub connected: bool,
    pub stale: bool,
    pub tick: u64,
    pub time: f64,
    pub vehicles: usize,
    pub elements: usize,
}
