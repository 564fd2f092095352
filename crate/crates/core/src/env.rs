//! Multi-agent intersection-traversal environment.
//!
//! Each agent drives at constant throttle and picks a discrete steering
//! action in `{−1, 0, +1}` every environment step. Rewards are `+1` on
//! reaching the goal and `−0.425·‖g‖₂` on collision, zero otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::vehicle::ActuationCommand;
use crate::error::CoreError;
use crate::scene::{Pose2, Scene};
use crate::transform::wrap_angle;
use crate::world::{VehicleSpawn, World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Single,
    Multi,
    HeadOn,
}

impl Scenario {
    /// Spawn names on the intersection map; each goal shares its spawn's name.
    pub fn spawn_names(&self) -> &'static [&'static str] {
        match self {
            Scenario::Single => &["south"],
            Scenario::Multi => &["south", "north", "west", "east"],
            Scenario::HeadOn => &["south", "north_oncoming"],
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Scenario::Single),
            "multi" => Ok(Scenario::Multi),
            "head_on" | "head-on" => Ok(Scenario::HeadOn),
            other => Err(CoreError::Env(format!("unknown scenario `{other}` (single, multi, head_on)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Physics ticks per environment step.
    pub ticks_per_step: u32,
    pub throttle: f64,
    /// Goal is reached when `‖g‖₂` falls to this distance, m.
    pub goal_tolerance: f64,
    /// Environment steps before the episode times out.
    pub timeout_steps: u64,
    /// Half-width of the uniform spawn-position jitter, m.
    pub spawn_jitter: f64,
    pub collision_coeff: f64,
    pub world: WorldConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            ticks_per_step: 5,
            throttle: 0.8,
            goal_tolerance: 0.05,
            timeout_steps: 2000,
            spawn_jitter: 0.01,
            collision_coeff: 0.425,
            world: WorldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerObservation {
    /// Peer position in the observer's body frame, m.
    pub position: [f64; 2],
    /// Peer yaw relative to the observer, rad.
    pub yaw: f64,
    /// Peer longitudinal speed, m/s.
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub agent_id: String,
    /// Goal relative to the agent, in the agent's frame, m.
    pub goal: [f64; 2],
    /// One entry per other agent, ordered by agent id.
    pub peers: Vec<PeerObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Goal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub agent_id: String,
    pub action: i8,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStepResult {
    pub observations: Vec<AgentObservation>,
    pub agents: Vec<AgentStep>,
    pub episode_done: bool,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub pose: Pose2,
    pub goal: [f64; 2],
}

#[derive(Debug, Clone)]
struct Agent {
    spec: AgentSpec,
    done: Option<DoneReason>,
}

/// `‖g‖₂` written out as the plain sum of squares.
pub fn goal_distance(g: [f64; 2]) -> f64 {
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

pub fn collision_reward(coeff: f64, g: [f64; 2]) -> f64 {
    -coeff * goal_distance(g)
}

pub const GOAL_REWARD: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct IntersectionEnv {
    cfg: EnvConfig,
    scene: Scene,
    world: Option<World>,
    agents: Vec<Agent>,
    steps: u64,
}

impl IntersectionEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, CoreError> {
        Self::with_scene(cfg, Scene::fixture("intersection_school")?)
    }

    pub fn with_scene(cfg: EnvConfig, scene: Scene) -> Result<Self, CoreError> {
        if cfg.ticks_per_step == 0 {
            return Err(CoreError::Env("ticks_per_step must be at least 1".into()));
        }
        if !(cfg.goal_tolerance > 0.0) || !(cfg.spawn_jitter >= 0.0) {
            return Err(CoreError::Env("goal_tolerance must be positive and spawn_jitter non-negative".into()));
        }
        Ok(Self {
            cfg,
            scene,
            world: None,
            agents: Vec::new(),
            steps: 0,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    /// Places agents for `scenario`; spawn jitter is drawn from `seed`.
    pub fn reset(&mut self, scenario: Scenario, seed: u64) -> Result<Vec<AgentObservation>, CoreError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = self.cfg.spawn_jitter;
        let mut specs = Vec::new();
        for (i, name) in scenario.spawn_names().iter().enumerate() {
            let mut pose = self
                .scene
                .spawn(name)
                .ok_or_else(|| CoreError::Env(format!("scene has no spawn `{name}`")))?;
            let goal = self
                .scene
                .goal(name)
                .ok_or_else(|| CoreError::Env(format!("scene has no goal `{name}`")))?;
            if j > 0.0 {
                pose.x += rng.random_range(-j..=j);
                pose.y += rng.random_range(-j..=j);
            }
            specs.push(AgentSpec {
                id: format!("A{}", i + 1),
                pose,
                goal: [goal.x, goal.y],
            });
        }
        self.reset_custom(specs, seed)
    }

    /// Places arbitrary agents. Agent ids order the peer lists.
    pub fn reset_custom(&mut self, mut specs: Vec<AgentSpec>, seed: u64) -> Result<Vec<AgentObservation>, CoreError> {
        if specs.is_empty() {
            return Err(CoreError::Env("at least one agent is required".into()));
        }
        specs.sort_by(|a, b| a.id.cmp(&b.id));
        let spawns = specs
            .iter()
            .map(|s| VehicleSpawn {
                id: s.id.clone(),
                pose: s.pose,
            })
            .collect();
        let mut wc = self.cfg.world.clone();
        wc.seed = seed;
        self.world = Some(World::new(self.scene.clone(), wc, spawns)?);
        self.agents = specs.into_iter().map(|spec| Agent { spec, done: None }).collect();
        self.steps = 0;
        Ok(self.observations())
    }

    fn world_ref(&self) -> &World {
        self.world.as_ref().expect("reset before use")
    }

    fn goal_vector(&self, i: usize) -> [f64; 2] {
        let st = self.world_ref().state(&self.agents[i].spec.id).expect("agent vehicle");
        let c = &st.chassis;
        let g = self.agents[i].spec.goal;
        let (dx, dy) = (g[0] - c.x, g[1] - c.y);
        let (s, co) = c.psi.sin_cos();
        [co * dx + s * dy, -s * dx + co * dy]
    }

    pub fn observations(&self) -> Vec<AgentObservation> {
        let Some(world) = &self.world else {
            return Vec::new();
        };
        (0..self.agents.len())
            .map(|i| {
                let me = &world.state(&self.agents[i].spec.id).expect("agent vehicle").chassis;
                let (s, c) = me.psi.sin_cos();
                let peers = self
                    .agents
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, other)| {
                        let o = &world.state(&other.spec.id).expect("agent vehicle").chassis;
                        let (dx, dy) = (o.x - me.x, o.y - me.y);
                        PeerObservation {
                            position: [c * dx + s * dy, -s * dx + c * dy],
                            yaw: wrap_angle(o.psi - me.psi),
                            velocity: o.v_x,
                        }
                    })
                    .collect();
                AgentObservation {
                    agent_id: self.agents[i].spec.id.clone(),
                    goal: self.goal_vector(i),
                    peers,
                }
            })
            .collect()
    }

    /// One environment step: `actions[i]` steers agent `i` (in id order).
    pub fn step(&mut self, actions: &[i8]) -> Result<EnvStepResult, CoreError> {
        if self.world.is_none() {
            return Err(CoreError::Env("call reset before step".into()));
        }
        if self.agents.iter().all(|a| a.done.is_some()) {
            return Err(CoreError::Env("episode is over; call reset".into()));
        }
        if actions.len() != self.agents.len() {
            return Err(CoreError::Env(format!(
                "expected {} actions, got {}",
                self.agents.len(),
                actions.len()
            )));
        }
        if let Some(bad) = actions.iter().find(|a| !(-1..=1).contains(*a)) {
            return Err(CoreError::Env(format!("action {bad} is not one of -1, 0, 1")));
        }
        let mut warnings = Vec::new();
        let mut rewards = vec![0.0; self.agents.len()];
        let throttle = self.cfg.throttle;
        {
            let world = self.world.as_mut().expect("checked above");
            for (agent, &a) in self.agents.iter().zip(actions) {
                let cmd = if agent.done.is_some() {
                    if a != 0 {
                        warnings.push(format!("agent {} is done; action ignored", agent.spec.id));
                    }
                    ActuationCommand::default()
                } else {
                    ActuationCommand::new(throttle, a as f64)
                };
                world.set_command(&agent.spec.id, cmd)?;
            }
        }
        for _ in 0..self.cfg.ticks_per_step {
            self.world.as_mut().expect("checked above").step()?;
            for i in 0..self.agents.len() {
                if self.agents[i].done.is_some() {
                    continue;
                }
                let g = self.goal_vector(i);
                let collided = self.world_ref().state(&self.agents[i].spec.id).expect("agent").collided;
                let outcome = if collided {
                    Some((DoneReason::Collision, collision_reward(self.cfg.collision_coeff, g)))
                } else if goal_distance(g) <= self.cfg.goal_tolerance {
                    Some((DoneReason::Goal, GOAL_REWARD))
                } else {
                    None
                };
                if let Some((reason, reward)) = outcome {
                    self.agents[i].done = Some(reason);
                    rewards[i] = reward;
                    let id = self.agents[i].spec.id.clone();
                    self.world.as_mut().expect("checked above").set_command(&id, ActuationCommand::default())?;
                }
            }
        }
        self.steps += 1;
        if self.steps >= self.cfg.timeout_steps {
            for a in &mut self.agents {
                a.done.get_or_insert(DoneReason::Timeout);
            }
        }
        let agents = self
            .agents
            .iter()
            .zip(actions)
            .zip(rewards)
            .map(|((a, &action), reward)| AgentStep {
                agent_id: a.spec.id.clone(),
                action,
                reward,
                done: a.done.is_some(),
                done_reason: a.done,
            })
            .collect();
        Ok(EnvStepResult {
            observations: self.observations(),
            agents,
            episode_done: self.agents.iter().all(|a| a.done.is_some()),
            step: self.steps,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent_reset() {
        let mut env = IntersectionEnv::new(EnvConfig::default()).unwrap();
        let obs = env.reset(Scenario::Single, 3).unwrap();
        assert_eq!(obs.len(), 1);
        assert!(obs[0].peers.is_empty());
    }

    #[test]
    fn same_seed_same_spawns() {
        let mut a = IntersectionEnv::new(EnvConfig::default()).unwrap();
        let mut b = IntersectionEnv::new(EnvConfig::default()).unwrap();
        assert_eq!(a.reset(Scenario::Multi, 11).unwrap(), b.reset(Scenario::Multi, 11).unwrap());
        let c = b.reset(Scenario::Multi, 12).unwrap();
        assert_ne!(a.observations(), c);
        assert!(a.observations().iter().all(|o| o.peers.len() == 3));
    }

    #[test]
    fn goal_in_agent_frame() {
        let cfg = EnvConfig {
            spawn_jitter: 0.0,
            ..EnvConfig::default()
        };
        let mut env = IntersectionEnv::new(cfg).unwrap();
        let obs = env.reset(Scenario::Single, 0).unwrap();
        // South spawn (0.15, −1.2) facing +y, goal (0.15, 1.2): 2.4 m dead ahead.
        assert!((obs[0].goal[0] - 2.4).abs() < 1e-12);
        assert!(obs[0].goal[1].abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(collision_reward(0.425, [2.0, 0.0]), -0.85);
        assert_eq!(GOAL_REWARD, 1.0);
    }

    #[test]
    fn bad_actions_rejected() {
        let mut env = IntersectionEnv::new(EnvConfig::default()).unwrap();
        assert!(env.step(&[0]).is_err());
        env.reset(Scenario::Single, 0).unwrap();
        assert!(env.step(&[2]).is_err());
        assert!(env.step(&[0, 0]).is_err());
        let r = env.step(&[0]).unwrap();
        assert_eq!(r.agents[0].reward, 0.0);
        assert!(!r.agents[0].done);
    }

    #[test]
    fn straight_drive_reaches_goal() {
        let cfg = EnvConfig {
            spawn_jitter: 0.0,
            ..EnvConfig::default()
        };
        let mut env = IntersectionEnv::new(cfg).unwrap();
        env.reset(Scenario::Single, 0).unwrap();
        let mut last = None;
        for _ in 0..2000 {
            let r = env.step(&[0]).unwrap();
            if r.episode_done {
                last = Some(r);
                break;
            }
        }
        let r = last.expect("episode ends");
        assert_eq!(r.agents[0].done_reason, Some(DoneReason::Goal));
        assert_eq!(r.agents[0].reward, 1.0);
    }
}
