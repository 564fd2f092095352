//! Proximity-triggered behavior rules that trim a base driving command.
//!
//! A rule fires for every element of its kind whose detection radius
//! contains the vehicle. Trims are additive on the normalized command and
//! the sum is clamped to `[-1, 1]`. Stop rules force zero throttle; a stop
//! rule with `resume_on` stays active in every state except that one, so
//! red → yellow → green holds the vehicle until green.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::database::ScmDatabase;
use crate::dynamics::vehicle::ActuationCommand;
use crate::error::CoreError;
use crate::scene::{ElementKind, LightState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub kind: ElementKind,
    pub state: Option<LightState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorRule {
    pub name: String,
    pub kind: ElementKind,
    #[serde(default)]
    pub state: Option<LightState>,
    #[serde(default)]
    pub throttle_trim: f64,
    #[serde(default)]
    pub steering_trim: f64,
    #[serde(default)]
    pub stop: bool,
    #[serde(default)]
    pub resume_on: Option<LightState>,
}

impl BehaviorRule {
    pub fn trigger(&self) -> Trigger {
        Trigger {
            kind: self.kind,
            state: self.state,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |m: &str| Err(CoreError::InvalidRule(self.name.clone(), m.to_string()));
        for t in [self.throttle_trim, self.steering_trim] {
            if !t.is_finite() || t.abs() > 1.0 {
                return bad("trims must lie in [-1, 1]");
            }
        }
        if self.stop && self.throttle_trim != 0.0 {
            return bad("a stop rule cannot also trim throttle");
        }
        let is_light = self.kind == ElementKind::TrafficLight;
        if !is_light && (self.state.is_some() || self.resume_on.is_some()) {
            return bad("only traffic_light rules may name light states");
        }
        if self.resume_on.is_some() && !self.stop {
            return bad("resume_on only applies to stop rules");
        }
        if self.resume_on.is_some() && self.state == self.resume_on {
            return bad("a stop rule cannot resume on its own trigger state");
        }
        Ok(())
    }

    fn fires(&self, kind: ElementKind, state: Option<LightState>) -> bool {
        if kind != self.kind {
            return false;
        }
        match self.resume_on {
            Some(resume) => state != Some(resume),
            None => self.state.is_none() || self.state == state,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default)]
    pub rules: Vec<BehaviorRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<BehaviorRule>) -> Result<Self, CoreError> {
        let mut names = BTreeSet::new();
        for r in &rules {
            r.validate()?;
            if !names.insert(r.name.as_str()) {
                return Err(CoreError::InvalidRule(r.name.clone(), "duplicate rule name".into()));
            }
        }
        Ok(Self { rules })
    }

    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        let raw: RuleSet = toml::from_str(text).map_err(|e| CoreError::Config(format!("rules: {}", e.message())))?;
        Self::new(raw.rules)
    }

    /// Rules shipped with the repository.
    pub fn bundled() -> Self {
        Self::from_toml(include_str!("../../fixtures/rules.toml")).expect("bundled rules are valid")
    }
}

/// Modulates `base` for a vehicle at `position`. Pure in its inputs.
pub fn plan(position: [f64; 2], base: ActuationCommand, db: &ScmDatabase, rules: &RuleSet) -> ActuationCommand {
    let mut throttle_trim = 0.0;
    let mut steering_trim = 0.0;
    let mut stop = false;
    for el in db.elements.values() {
        let (dx, dy) = (position[0] - el.position[0], position[1] - el.position[1]);
        if (dx * dx + dy * dy).sqrt() > el.detection_radius {
            continue;
        }
        for r in rules.rules.iter().filter(|r| r.fires(el.kind, el.state)) {
            throttle_trim += r.throttle_trim;
            steering_trim += r.steering_trim;
            stop |= r.stop;
        }
    }
    let throttle = if stop {
        0.0
    } else {
        (base.throttle + throttle_trim).clamp(-1.0, 1.0)
    };
    ActuationCommand::new(throttle, (base.steering + steering_trim).clamp(-1.0, 1.0))
}
