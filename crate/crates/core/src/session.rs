//! Transport-agnostic bridge session: client registry, control authority,
//! vehicle modes, the recorder, and the tick loop body.
//!
//! The server owns one `Session` behind its simulation task and feeds it
//! decoded envelopes; everything here is synchronous and deterministic.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::dynamics::vehicle::ActuationCommand;
use crate::env::{EnvConfig, IntersectionEnv, Scenario};
use crate::error::CoreError;
use crate::protocol::{
    ack, err, Code, ElementInfo, ElementWrite, Envelope, FrameFilter, FramePayload, Hello, Mode, ModePayload,
    MsgType, PeersPayload, ProtocolError, RecordAction, RecordPayload, Role, ScmEvent, SessionSnapshot, StepPayload,
    Subscriptions, VehicleInfo, PROTOCOL_VERSION,
};
use crate::recorder::{HistoryEvent, RecordMeta, Recorder};
use crate::scene::{LightState, Scene};
use crate::world::{VehicleSpawn, World, WorldConfig};

pub type ClientId = u64;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Scene document text; embedded in recordings for replay.
    pub scene_source: String,
    pub world: WorldConfig,
    pub spawns: Vec<VehicleSpawn>,
    /// When set, time advances only on STEP requests.
    pub lockstep: bool,
    pub env: EnvConfig,
}

impl SessionConfig {
    /// Spawns `vehicles` at the scene's first spawn points.
    pub fn from_scene_source(scene_source: String, world: WorldConfig, vehicles: usize) -> Result<Self, CoreError> {
        let scene = Scene::load(&scene_source)?;
        let spawns = World::spawns_from_scene(&scene, vehicles)?;
        Ok(Self {
            scene_source,
            world,
            spawns,
            lockstep: false,
            env: EnvConfig::default(),
        })
    }
}

/// Server → client traffic produced by one request or tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Broadcast {
    Frame { vehicle_id: String, envelope: Envelope },
    Peers(Envelope),
    Event(Envelope),
}

impl Broadcast {
    pub fn envelope(&self) -> &Envelope {
        match self {
            Broadcast::Frame { envelope, .. } | Broadcast::Peers(envelope) | Broadcast::Event(envelope) => envelope,
        }
    }

    /// Droppable traffic may be shed under backpressure; events may not.
    pub fn is_droppable(&self) -> bool {
        !matches!(self, Broadcast::Event(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Sent to the requesting client only.
    pub replies: Vec<Envelope>,
    pub broadcasts: Vec<Broadcast>,
}

impl Outcome {
    fn reply(e: Envelope) -> Self {
        Self {
            replies: vec![e],
            broadcasts: Vec::new(),
        }
    }
}

#[derive(Debug)]
struct Client {
    role: Role,
    vehicle: Option<String>,
    subscribe: Subscriptions,
    last_seq: Option<u64>,
    env: Option<IntersectionEnv>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvResetPayload {
    scenario: Scenario,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    config: Option<EnvConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvStepPayload {
    actions: Vec<i8>,
}

#[derive(Debug)]
pub struct Session {
    cfg: SessionConfig,
    world: World,
    clients: BTreeMap<ClientId, Client>,
    next_client: ClientId,
    modes: BTreeMap<String, Mode>,
    /// Vehicle → attached vehicle-controller.
    controllers: BTreeMap<String, ClientId>,
    /// Vehicle → UI client whose manual command is held.
    manual_owner: BTreeMap<String, ClientId>,
    held: BTreeMap<String, ActuationCommand>,
    last_effective: BTreeMap<String, ActuationCommand>,
    history: Vec<HistoryEvent>,
    recorder: Recorder,
}

fn pe(code: Code, message: impl Into<String>) -> ProtocolError {
    ProtocolError::new(code, message)
}

fn core_to_protocol(e: CoreError) -> ProtocolError {
    match e {
        CoreError::UnknownVehicle(_) => pe(Code::UnknownVehicle, e.to_string()),
        CoreError::UnknownElement(_) => pe(Code::UnknownElement, e.to_string()),
        CoreError::InvalidElementState { .. } => pe(Code::InvalidState, e.to_string()),
        CoreError::Recorder(_) => pe(Code::RecorderState, e.to_string()),
        CoreError::Env(_) => pe(Code::EnvError, e.to_string()),
        other => pe(Code::InvalidState, other.to_string()),
    }
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, CoreError> {
        let scene = Scene::load(&cfg.scene_source)?;
        let world = World::new(scene, cfg.world.clone(), cfg.spawns.clone())?;
        let modes = world.vehicle_ids().map(|id| (id.clone(), Mode::default())).collect();
        Ok(Self {
            cfg,
            world,
            clients: BTreeMap::new(),
            next_client: 1,
            modes,
            controllers: BTreeMap::new(),
            manual_owner: BTreeMap::new(),
            held: BTreeMap::new(),
            last_effective: BTreeMap::new(),
            history: Vec::new(),
            recorder: Recorder::default(),
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn is_lockstep(&self) -> bool {
        self.cfg.lockstep
    }

    pub fn mode(&self, vehicle: &str) -> Option<Mode> {
        self.modes.get(vehicle).copied()
    }

    pub fn controller_of(&self, vehicle: &str) -> Option<ClientId> {
        self.controllers.get(vehicle).copied()
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            scene_source: self.cfg.scene_source.clone(),
            world: self.cfg.world.clone(),
            spawns: self.cfg.spawns.clone(),
        }
    }

    /// Recorder control for the process hosting the session, bypassing the
    /// admin check that RECORD messages go through.
    pub fn start_recording(&mut self) -> Result<(), CoreError> {
        self.recorder.start(&self.meta(), &self.history)
    }

    pub fn stop_recording(&mut self) -> Result<(), CoreError> {
        self.recorder.stop()
    }

    pub fn export_recording(&self) -> Result<String, CoreError> {
        self.recorder.export()
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_recording()
    }

    fn tick(&self) -> u64 {
        self.world.clock().ticks()
    }

    fn event(&self, ev: ScmEvent) -> Broadcast {
        Broadcast::Event(Envelope::new(MsgType::ScmEvent, &ev).at(self.world.clock().time()))
    }

    pub fn snapshot(&self, client_id: ClientId) -> SessionSnapshot {
        let scene = self.world.scene();
        let vehicles = self
            .world
            .peers()
            .into_iter()
            .map(|peer| VehicleInfo {
                mode: self.modes[&peer.vehicle_id],
                controlled: self.controllers.contains_key(&peer.vehicle_id),
                vehicle_id: peer.vehicle_id.clone(),
                peer,
            })
            .collect();
        let elements = self
            .world
            .elements()
            .iter()
            .map(|(id, snap)| {
                let el = scene.element(id).expect("element table mirrors the scene");
                ElementInfo {
                    id: id.clone(),
                    kind: snap.kind,
                    state: snap.state,
                    version: snap.version,
                    position: [el.pose.x, el.pose.y],
                    detection_radius: el.detection_radius,
                }
            })
            .collect();
        SessionSnapshot {
            protocol: PROTOCOL_VERSION,
            client_id,
            scene: scene.name.clone(),
            dt: self.cfg.world.dt,
            tick: self.tick(),
            time: self.world.clock().time(),
            sensor_rate: self.cfg.world.sensor_rate,
            lockstep: self.cfg.lockstep,
            recording: self.recorder.is_recording(),
            vehicles,
            elements,
        }
    }

    /// Registers a client from its HELLO. Returns the new id, the HELLO
    /// reply carrying a full snapshot, and any broadcasts.
    pub fn connect(&mut self, hello: &Envelope) -> Result<(ClientId, Outcome), ProtocolError> {
        if hello.kind != MsgType::Hello {
            return Err(pe(Code::BadHandshake, "first message must be HELLO"));
        }
        let h: Hello = hello
            .payload_as()
            .map_err(|e| pe(Code::BadHandshake, e.message))?;
        if let Some(v) = h.protocol {
            if v != PROTOCOL_VERSION {
                return Err(pe(
                    Code::BadHandshake,
                    format!("protocol {v} is not supported (server speaks {PROTOCOL_VERSION})"),
                ));
            }
        }
        let vehicle = hello.vehicle_id.clone();
        if let Some(v) = &vehicle {
            if !self.world.has_vehicle(v) {
                return Err(pe(Code::UnknownVehicle, format!("unknown vehicle `{v}`")));
            }
        }
        let mut broadcasts = Vec::new();
        if h.role == Role::VehicleController {
            let Some(v) = &vehicle else {
                return Err(pe(Code::BadHandshake, "vehicle-controller must name a vehicle_id"));
            };
            if self.controllers.contains_key(v) {
                return Err(pe(Code::ControlConflict, format!("vehicle `{v}` already has a controller")));
            }
        }
        let id = self.next_client;
        self.next_client += 1;
        if h.role == Role::VehicleController {
            let v = vehicle.clone().expect("checked above");
            self.controllers.insert(v.clone(), id);
            broadcasts.push(self.event(ScmEvent::Controller {
                vehicle_id: v,
                attached: true,
                tick: self.tick(),
            }));
        }
        self.clients.insert(
            id,
            Client {
                role: h.role,
                vehicle,
                subscribe: h.subscribe,
                last_seq: None,
                env: None,
            },
        );
        let mut reply = Envelope::new(MsgType::Hello, &self.snapshot(id)).at(self.world.clock().time());
        reply.seq = hello.seq;
        Ok((
            id,
            Outcome {
                replies: vec![reply],
                broadcasts,
            },
        ))
    }

    /// Drops a client and any authority it held.
    pub fn disconnect(&mut self, client: ClientId) -> Outcome {
        let mut out = Outcome::default();
        if self.clients.remove(&client).is_none() {
            return out;
        }
        let owned: Vec<String> = self
            .controllers
            .iter()
            .filter(|(_, c)| **c == client)
            .map(|(v, _)| v.clone())
            .collect();
        for v in owned {
            self.controllers.remove(&v);
            if self.modes[&v] == Mode::Autonomous {
                self.held.remove(&v);
            }
            out.broadcasts.push(self.event(ScmEvent::Controller {
                vehicle_id: v,
                attached: false,
                tick: self.tick(),
            }));
        }
        let manual: Vec<String> = self
            .manual_owner
            .iter()
            .filter(|(_, c)| **c == client)
            .map(|(v, _)| v.clone())
            .collect();
        for v in manual {
            self.manual_owner.remove(&v);
            if self.modes[&v] == Mode::Manual {
                self.held.remove(&v);
            }
        }
        out
    }

    /// Handles one post-handshake envelope from `client`.
    pub fn handle(&mut self, client: ClientId, msg: &Envelope) -> Outcome {
        match self.dispatch(client, msg) {
            Ok(out) => out,
            Err(e) => Outcome::reply(err(Some(msg.kind), &e, msg.seq)),
        }
    }

    fn client(&self, client: ClientId) -> Result<&Client, ProtocolError> {
        self.clients
            .get(&client)
            .ok_or_else(|| pe(Code::BadHandshake, "client has not completed HELLO"))
    }

    fn require_admin(&self, client: ClientId) -> Result<(), ProtocolError> {
        let c = self.client(client)?;
        if c.role.is_admin() {
            Ok(())
        } else {
            Err(pe(Code::NotPermitted, format!("role {:?} may not do this", c.role)))
        }
    }

    fn dispatch(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        self.client(client)?;
        match msg.kind {
            MsgType::Cmd => self.on_cmd(client, msg),
            MsgType::Mode => self.on_mode(client, msg),
            MsgType::Reset => self.on_reset(client, msg),
            MsgType::Record => self.on_record(client, msg),
            MsgType::ScmEvent => self.on_element_write(client, msg),
            MsgType::Step => self.on_step(client, msg),
            MsgType::EnvReset => self.on_env_reset(client, msg),
            MsgType::EnvStep => self.on_env_step(client, msg),
            MsgType::Hello => Err(pe(Code::BadMessage, "HELLO was already received")),
            other => Err(pe(Code::BadMessage, format!("{other:?} is server-to-client only"))),
        }
    }

    fn on_cmd(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        let seq = msg.seq.ok_or_else(|| pe(Code::BadMessage, "CMD requires seq"))?;
        let c = self.client(client)?;
        let vehicle = msg
            .vehicle_id
            .clone()
            .or_else(|| c.vehicle.clone())
            .ok_or_else(|| pe(Code::BadMessage, "CMD requires vehicle_id"))?;
        let mode = *self
            .modes
            .get(&vehicle)
            .ok_or_else(|| pe(Code::UnknownVehicle, format!("unknown vehicle `{vehicle}`")))?;
        if c.last_seq.is_some_and(|last| seq <= last) {
            return Err(pe(Code::Stale, format!("seq {seq} is not newer than {}", c.last_seq.unwrap_or(0))));
        }
        let authorized = match mode {
            Mode::Autonomous => self.controllers.get(&vehicle) == Some(&client),
            Mode::Manual => c.role == Role::Ui,
        };
        if !authorized {
            return Err(pe(
                Code::NotController,
                format!("client has no authority over `{vehicle}` in {mode:?} mode"),
            ));
        }
        let requested: ActuationCommand = msg
            .payload_as::<crate::protocol::CmdPayload>()
            .map_err(|e| pe(Code::BadMessage, e.message))?
            .into();
        let (cmd, changed) = requested.clamped();
        self.clients.get_mut(&client).expect("checked").last_seq = Some(seq);
        if mode == Mode::Manual {
            self.manual_owner.insert(vehicle.clone(), client);
        }
        self.held.insert(vehicle, cmd);
        let (code, detail) = if changed {
            (Code::WarnClamped, Some("command clamped to [-1, 1]".to_string()))
        } else {
            (Code::Ok, None)
        };
        Ok(Outcome::reply(ack(MsgType::Cmd, code, Some(seq), detail, Value::Null)))
    }

    fn on_mode(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        self.require_admin(client)?;
        let vehicle = msg
            .vehicle_id
            .clone()
            .ok_or_else(|| pe(Code::BadMessage, "MODE requires vehicle_id"))?;
        let m: ModePayload = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        let current = *self
            .modes
            .get(&vehicle)
            .ok_or_else(|| pe(Code::UnknownVehicle, format!("unknown vehicle `{vehicle}`")))?;
        let mut out = Outcome::default();
        if current != m.mode {
            self.modes.insert(vehicle.clone(), m.mode);
            self.held.remove(&vehicle);
            self.manual_owner.remove(&vehicle);
            out.broadcasts.push(self.event(ScmEvent::Mode {
                vehicle_id: vehicle.clone(),
                mode: m.mode,
                tick: self.tick(),
            }));
        }
        out.replies.push(ack(
            MsgType::Mode,
            Code::Ok,
            msg.seq,
            None,
            json!({ "vehicle_id": vehicle, "mode": m.mode }),
        ));
        Ok(out)
    }

    fn on_reset(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        self.require_admin(client)?;
        self.world.reset();
        self.history.clear();
        self.last_effective.clear();
        self.held.clear();
        self.manual_owner.clear();
        self.recorder.segment_boundary();
        let mut out = Outcome::reply(ack(MsgType::Reset, Code::Ok, msg.seq, None, json!({ "tick": 0 })));
        out.broadcasts.push(self.event(ScmEvent::Reset { tick: 0 }));
        Ok(out)
    }

    fn on_record(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        self.require_admin(client)?;
        let r: RecordPayload = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        let data = match r.action {
            RecordAction::Start => {
                self.recorder
                    .start(&self.meta(), &self.history)
                    .map_err(core_to_protocol)?;
                Value::Null
            }
            RecordAction::Stop => {
                self.recorder.stop().map_err(core_to_protocol)?;
                Value::Null
            }
            RecordAction::Export => json!({ "csv": self.recorder.export().map_err(core_to_protocol)? }),
        };
        Ok(Outcome::reply(ack(MsgType::Record, Code::Ok, msg.seq, None, data)))
    }

    fn on_element_write(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        self.require_admin(client)?;
        let w: ElementWrite = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        if self.world.elements().get(&w.element).is_none() {
            return Err(pe(Code::UnknownElement, format!("unknown element `{}`", w.element)));
        }
        let state: LightState = w.state.parse().map_err(|m: String| pe(Code::InvalidState, m))?;
        let change = self.world.set_element(&w.element, state).map_err(core_to_protocol)?;
        let ev = HistoryEvent::Elem {
            tick: self.tick(),
            element: change.id.clone(),
            state,
        };
        self.recorder.event(&ev);
        self.history.push(ev);
        let mut out = Outcome::reply(ack(
            MsgType::ScmEvent,
            Code::Ok,
            msg.seq,
            None,
            json!({ "element": change.id, "state": state, "version": change.version, "tick": self.tick() }),
        ));
        out.broadcasts.push(self.event(ScmEvent::Element {
            element: change.id,
            state,
            version: change.version,
            tick: self.tick(),
        }));
        Ok(out)
    }

    fn on_step(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        if !self.cfg.lockstep {
            return Err(pe(Code::InvalidState, "STEP is only accepted in lockstep mode"));
        }
        if self.client(client)?.role == Role::Observer {
            return Err(pe(Code::NotPermitted, "observers may not advance time"));
        }
        let s: StepPayload = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        let mut out = Outcome::default();
        for _ in 0..s.ticks {
            let mut b = self.advance().map_err(core_to_protocol)?;
            out.broadcasts.append(&mut b);
        }
        out.replies.push(ack(
            MsgType::Step,
            Code::Ok,
            msg.seq,
            None,
            json!({ "tick": self.tick(), "time": self.world.clock().time() }),
        ));
        Ok(out)
    }

    fn on_env_reset(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        let p: EnvResetPayload = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        let cfg = p.config.unwrap_or_else(|| self.cfg.env.clone());
        let mut env = IntersectionEnv::new(cfg).map_err(core_to_protocol)?;
        let obs = env.reset(p.scenario, p.seed).map_err(core_to_protocol)?;
        self.clients.get_mut(&client).expect("checked").env = Some(env);
        Ok(Outcome::reply(ack(
            MsgType::EnvReset,
            Code::Ok,
            msg.seq,
            None,
            json!({ "observations": obs }),
        )))
    }

    fn on_env_step(&mut self, client: ClientId, msg: &Envelope) -> Result<Outcome, ProtocolError> {
        let p: EnvStepPayload = msg.payload_as().map_err(|e| pe(Code::BadMessage, e.message))?;
        let env = self
            .clients
            .get_mut(&client)
            .expect("checked")
            .env
            .as_mut()
            .ok_or_else(|| pe(Code::EnvError, "send ENV_RESET first"))?;
        let r = env.step(&p.actions).map_err(core_to_protocol)?;
        let data = serde_json::to_value(&r).map_err(|e| pe(Code::EnvError, e.to_string()))?;
        Ok(Outcome::reply(ack(MsgType::EnvStep, Code::Ok, msg.seq, None, data)))
    }

    /// Advances one physics tick. Free-running servers call this on their
    /// timer; lockstep sessions reach it through STEP.
    pub fn advance(&mut self) -> Result<Vec<Broadcast>, CoreError> {
        let now = self.tick();
        let ids: Vec<String> = self.world.vehicle_ids().cloned().collect();
        for id in &ids {
            let authority = match self.modes[id] {
                Mode::Autonomous => self.controllers.contains_key(id),
                Mode::Manual => self.manual_owner.contains_key(id),
            };
            let eff = if authority {
                self.held.get(id).copied().unwrap_or_default()
            } else {
                ActuationCommand::default()
            };
            if self.last_effective.get(id) != Some(&eff) {
                let ev = HistoryEvent::Cmd {
                    tick: now,
                    vehicle: id.clone(),
                    cmd: eff,
                };
                self.recorder.event(&ev);
                self.history.push(ev);
                self.last_effective.insert(id.clone(), eff);
            }
            self.world.set_command(id, eff)?;
        }
        let out = self.world.step()?;
        let mut broadcasts = Vec::with_capacity(out.frames.len() + 1);
        let elements: BTreeMap<String, _> = self.world.elements().iter().map(|(k, v)| (k.clone(), *v)).collect();
        let summary = self.world.elements().summary();
        for frame in out.frames {
            let cmd = self.world.command(&frame.vehicle_id).unwrap_or_default();
            self.recorder.row(&frame, &cmd, &summary);
            let vehicle_id = frame.vehicle_id.clone();
            let envelope = Envelope::new(
                MsgType::Frame,
                &FramePayload {
                    frame,
                    elements: elements.clone(),
                },
            )
            .vehicle(vehicle_id.clone())
            .at(out.time);
            broadcasts.push(Broadcast::Frame { vehicle_id, envelope });
        }
        broadcasts.push(Broadcast::Peers(
            Envelope::new(
                MsgType::Peers,
                &PeersPayload {
                    tick: out.tick,
                    peers: out.peers,
                },
            )
            .at(out.time),
        ));
        Ok(broadcasts)
    }

    /// Clients that should receive `b`, per their role and subscriptions.
    pub fn recipients(&self, b: &Broadcast) -> Vec<ClientId> {
        self.clients
            .iter()
            .filter(|(_, c)| match b {
                Broadcast::Frame { vehicle_id, .. } => match &c.subscribe.frames {
                    FrameFilter::All => true,
                    FrameFilter::None => false,
                    FrameFilter::Only(ids) => ids.contains(vehicle_id),
                    FrameFilter::Default => match c.role {
                        Role::VehicleController => c.vehicle.as_deref() == Some(vehicle_id),
                        Role::Scm => false,
                        _ => true,
                    },
                },
                Broadcast::Peers(_) => c.subscribe.peers,
                Broadcast::Event(_) => c.subscribe.events,
            })
            .map(|(id, _)| *id)
            .collect()
    }
}
