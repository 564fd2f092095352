use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    TrafficLight,
    Stop,
    GiveWay,
    Regulatory,
    Cautionary,
    Informatory,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::TrafficLight => "traffic_light",
            ElementKind::Stop => "stop",
            ElementKind::GiveWay => "give_way",
            ElementKind::Regulatory => "regulatory",
            ElementKind::Cautionary => "cautionary",
            ElementKind::Informatory => "informatory",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

impl LightState {
    pub fn as_str(&self) -> &'static str {
        match self {
            LightState::Red => "red",
            LightState::Yellow => "yellow",
            LightState::Green => "green",
        }
    }
}

impl fmt::Display for LightState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LightState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "red" => Ok(LightState::Red),
            "yellow" => Ok(LightState::Yellow),
            "green" => Ok(LightState::Green),
            other => Err(format!("`{other}` is not a light state (red, yellow, green)")),
        }
    }
}

/// Planar pose, radians in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficElement {
    pub id: String,
    pub kind: ElementKind,
    /// Initial light state; `None` for signs.
    pub state: Option<LightState>,
    pub pose: Pose2,
    pub detection_radius: f64,
}

/// Live state of one traffic element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSnapshot {
    pub kind: ElementKind,
    pub state: Option<LightState>,
    pub version: u64,
}

/// Emitted whenever an element changes state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementChange {
    pub id: String,
    pub state: LightState,
    pub version: u64,
}

/// Mutable traffic-element states with a monotone version per element.
/// The scene geometry stays immutable; only this table changes at runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStates {
    states: BTreeMap<String, ElementSnapshot>,
}

impl ElementStates {
    pub fn from_elements(elements: &[TrafficElement]) -> Self {
        let states = elements
            .iter()
            .map(|e| {
                (
                    e.id.clone(),
                    ElementSnapshot {
                        kind: e.kind,
                        state: e.state,
                        version: 0,
                    },
                )
            })
            .collect();
        Self { states }
    }

    pub fn get(&self, id: &str) -> Option<&ElementSnapshot> {
        self.states.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ElementSnapshot)> {
        self.states.iter()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Replaces an element's state and bumps its version. Setting the same
    /// state again still counts as a write.
    pub fn set(&mut self, id: &str, state: LightState) -> Result<ElementChange, CoreError> {
        let snap = self
            .states
            .get_mut(id)
            .ok_or_else(|| CoreError::UnknownElement(id.to_string()))?;
        if snap.kind != ElementKind::TrafficLight {
            return Err(CoreError::InvalidElementState {
                id: id.to_string(),
                kind: snap.kind.to_string(),
                state: state.to_string(),
            });
        }
        snap.state = Some(state);
        snap.version += 1;
        Ok(ElementChange {
            id: id.to_string(),
            state,
            version: snap.version,
        })
    }

    /// Compact `id=state` list used in record rows, e.g. `L1=red;L2=green`.
    pub fn summary(&self) -> String {
        self.states
            .iter()
            .filter_map(|(id, s)| s.state.map(|st| format!("{id}={st}")))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elements() -> Vec<TrafficElement> {
        vec![
            TrafficElement {
                id: "L1".into(),
                kind: ElementKind::TrafficLight,
                state: Some(LightState::Red),
                pose: Pose2::new(0.0, 0.0, 0.0),
                detection_radius: 0.3,
            },
            TrafficElement {
                id: "S1".into(),
                kind: ElementKind::Stop,
                state: None,
                pose: Pose2::new(1.0, 0.0, 0.0),
                detection_radius: 0.3,
            },
        ]
    }

    #[test]
    fn light_toggles_and_versions_increase() {
        let mut st = ElementStates::from_elements(&elements());
        let c = st.set("L1", LightState::Green).unwrap();
        assert_eq!(c.version, 1);
        assert_eq!(st.get("L1").unwrap().state, Some(LightState::Green));
        let c = st.set("L1", LightState::Green).unwrap();
        assert_eq!(c.version, 2);
    }

    #[test]
    fn sign_rejects_state() {
        let mut st = ElementStates::from_elements(&elements());
        let err = st.set("S1", LightState::Green).unwrap_err();
        assert!(matches!(err, CoreError::InvalidElementState { .. }));
        assert_eq!(st.get("S1").unwrap().version, 0);
    }

    #[test]
    fn unknown_id() {
        let mut st = ElementStates::from_elements(&elements());
        assert!(matches!(st.set("X", LightState::Red), Err(CoreError::UnknownElement(_))));
    }

    #[test]
    fn last_write_wins() {
        let mut st = ElementStates::from_elements(&elements());
        for s in [LightState::Green, LightState::Yellow, LightState::Red, LightState::Green] {
            st.set("L1", s).unwrap();
        }
        let snap = st.get("L1").unwrap();
        assert_eq!(snap.state, Some(LightState::Green));
        assert_eq!(snap.version, 4);
        assert_eq!(st.summary(), "L1=green");
    }
}
