use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{ElementInfo, Mode, PeersPayload, ScmEvent, SessionSnapshot};
use crate::scene::{ElementKind, LightState};
use crate::world::PeerState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub vehicle_id: String,
    pub peer: PeerState,
    pub mode: Mode,
    pub controlled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub id: String,
    pub kind: ElementKind,
    pub state: Option<LightState>,
    pub version: u64,
    pub position: [f64; 2],
    pub detection_radius: f64,
}

impl From<ElementInfo> for ElementRecord {
    fn from(e: ElementInfo) -> Self {
        Self {
            id: e.id,
            kind: e.kind,
            state: e.state,
            version: e.version,
            position: e.position,
            detection_radius: e.detection_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Position in the log; strictly increasing.
    pub index: u64,
    pub timestamp: f64,
    pub tick: u64,
    pub entity: String,
    pub change: String,
}

/// Registry of vehicles and traffic elements mirrored from the bridge.
/// A single sync loop writes it; readers clone snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScmDatabase {
    pub vehicles: BTreeMap<String, VehicleRecord>,
    pub elements: BTreeMap<String, ElementRecord>,
    pub log: Vec<LogEntry>,
    pub stale: bool,
    pub tick: u64,
    pub time: f64,
}

impl ScmDatabase {
    pub fn from_snapshot(snap: &SessionSnapshot) -> Self {
        let mut db = Self::default();
        db.apply_snapshot(snap);
        db
    }

    fn push(&mut self, entity: &str, change: String) {
        let index = self.log.len() as u64;
        // Timestamps restart at a reset; keep the log ordered anyway.
        let timestamp = self.log.last().map_or(self.time, |l| l.timestamp.max(self.time));
        self.log.push(LogEntry {
            index,
            timestamp,
            tick: self.tick,
            entity: entity.to_string(),
            change,
        });
    }

    /// Full-state resync, used on first connect and on every reconnect.
    /// Element versions come straight from the bridge, so none are skipped.
    pub fn apply_snapshot(&mut self, snap: &SessionSnapshot) {
        self.tick = snap.tick;
        self.time = snap.time;
        self.vehicles = snap
            .vehicles
            .iter()
            .map(|v| {
                (
                    v.vehicle_id.clone(),
                    VehicleRecord {
                        vehicle_id: v.vehicle_id.clone(),
                        peer: v.peer.clone(),
                        mode: v.mode,
                        controlled: v.controlled,
                    },
                )
            })
            .collect();
        for e in &snap.elements {
            let changed = self.elements.get(&e.id).is_none_or(|old| old.version != e.version);
            if changed {
                let state = e.state.map_or("-".to_string(), |s| s.to_string());
                self.push(&e.id, format!("state={state} version={}", e.version));
            }
        }
        self.elements = snap.elements.iter().map(|e| (e.id.clone(), e.clone().into())).collect();
        self.stale = false;
        self.push("scm", "resync".into());
    }

    pub fn apply_peers(&mut self, p: &PeersPayload) {
        self.tick = p.tick;
        for peer in &p.peers {
            self.time = peer.timestamp;
            match self.vehicles.get_mut(&peer.vehicle_id) {
                Some(v) => v.peer = peer.clone(),
                None => {
                    self.vehicles.insert(
                        peer.vehicle_id.clone(),
                        VehicleRecord {
                            vehicle_id: peer.vehicle_id.clone(),
                            peer: peer.clone(),
                            mode: Mode::default(),
                            controlled: false,
                        },
                    );
                }
            }
        }
    }

    pub fn apply_event(&mut self, ev: &ScmEvent) {
        match ev {
            ScmEvent::Element {
                element,
                state,
                version,
                ..
            } => {
                let Some(rec) = self.elements.get_mut(element) else {
                    return;
                };
                if *version <= rec.version {
                    return;
                }
                rec.state = Some(*state);
                rec.version = *version;
                self.push(element, format!("state={state} version={version}"));
            }
            ScmEvent::Mode { vehicle_id, mode, .. } => {
                if let Some(v) = self.vehicles.get_mut(vehicle_id) {
                    v.mode = *mode;
                }
                self.push(vehicle_id, format!("mode={mode:?}").to_lowercase());
            }
            ScmEvent::Controller {
                vehicle_id, attached, ..
            } => {
                if let Some(v) = self.vehicles.get_mut(vehicle_id) {
                    v.controlled = *attached;
                }
                let what = if *attached { "controller attached" } else { "controller detached" };
                self.push(vehicle_id, what.into());
            }
            ScmEvent::Reset { tick } => {
                self.tick = *tick;
                self.time = 0.0;
                self.push("scene", "reset".into());
            }
        }
    }

    pub fn mark_stale(&mut self) {
        if !self.stale {
            self.stale = true;
            self.push("scm", "bridge disconnected".into());
        }
    }

    /// Log entries with `timestamp >= since`.
    pub fn events_since(&self, since: f64) -> Vec<LogEntry> {
        let start = self.log.partition_point(|e| e.timestamp < since);
        self.log[start..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot() -> SessionSnapshot {
        SessionSnapshot {
            protocol: 1,
            client_id: 1,
            scene: "t".into(),
            dt: 0.01,
            tick: 0,
            time: 0.0,
            sensor_rate: 7.0,
            lockstep: false,
            recording: false,
            vehicles: Vec::new(),
            elements: vec![ElementInfo {
                id: "L1".into(),
                kind: ElementKind::TrafficLight,
                state: Some(LightState::Red),
                version: 0,
                position: [0.0, 0.0],
                detection_radius: 0.3,
            }],
        }
    }

    #[test]
    fn versions_only_move_forward() {
        let mut db = ScmDatabase::from_snapshot(&snapshot());
        let ev = |version| ScmEvent::Element {
            element: "L1".into(),
            state: LightState::Green,
            version,
            tick: 1,
        };
        db.apply_event(&ev(1));
        db.apply_event(&ev(1));
        assert_eq!(db.elements["L1"].version, 1);
        assert_eq!(db.log.iter().filter(|e| e.entity == "L1").count(), 2);
    }

    #[test]
    fn stale_until_resync() {
        let mut db = ScmDatabase::from_snapshot(&snapshot());
        db.mark_stale();
        assert!(db.stale);
        db.apply_snapshot(&snapshot());
        assert!(!db.stale);
    }

    #[test]
    fn events_since_filters() {
        let mut db = ScmDatabase::from_snapshot(&snapshot());
        db.time = 2.0;
        db.mark_stale();
        assert_eq!(db.events_since(1.0).len(), 1);
        assert_eq!(db.events_since(0.0).len(), db.log.len());
    }
}
