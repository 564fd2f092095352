//! Multi-vehicle world: one scene, one clock, any number of vehicles.
//!
//! Each tick steps every vehicle against the read-only scene, then resolves
//! vehicle–vehicle contact in a serialized phase, then samples sensors on
//! their own cadences.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{Cadence, SimClock};
use crate::config::VehicleConfig;
use crate::dynamics::vehicle::{ActuationCommand, ChassisState, Vehicle, VehicleState, RL, RR};
use crate::error::CoreError;
use crate::scene::geometry::Vec2;
use crate::scene::{ElementChange, ElementStates, LightState, Pose2, Scene};
use crate::sensors::inertial::{add_imu_noise, read_imu, read_ips};
use crate::sensors::{encoder, lidar, SensorFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Physics step, s.
    pub dt: f64,
    pub seed: u64,
    /// Sensor-frame publication rate, Hz.
    pub sensor_rate: f64,
    pub vehicle: VehicleConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: SimClock::DEFAULT_DT,
            seed: 0,
            sensor_rate: 7.0,
            vehicle: VehicleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpawn {
    pub id: String,
    pub pose: Pose2,
}

/// Absolute state of one vehicle as shared over V2V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerState {
    pub vehicle_id: String,
    pub position: [f64; 2],
    pub yaw: f64,
    /// Signed body-longitudinal speed, m/s.
    pub velocity: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    state: VehicleState,
    /// World velocity before the last tick, for the IMU finite difference.
    prev_velocity: Vec2,
    command: ActuationCommand,
    lidar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub time: f64,
    /// Present only on sensor-cadence ticks, ordered by vehicle id.
    pub frames: Vec<SensorFrame>,
    /// Every tick, ordered by vehicle id.
    pub peers: Vec<PeerState>,
}

#[derive(Debug, Clone)]
pub struct World {
    scene: Scene,
    cfg: WorldConfig,
    model: Vehicle,
    clock: SimClock,
    frame_cadence: Cadence,
    lidar_cadence: Cadence,
    spawns: Vec<VehicleSpawn>,
    slots: BTreeMap<String, Slot>,
    elements: ElementStates,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(scene: Scene, cfg: WorldConfig, spawns: Vec<VehicleSpawn>) -> Result<Self, CoreError> {
        let clock = SimClock::new(cfg.dt)?;
        let frame_cadence = Cadence::new(cfg.sensor_rate, cfg.dt)?;
        let lidar_cadence = Cadence::new(cfg.vehicle.lidar.rate, cfg.dt)?;
        let model = Vehicle::new(cfg.vehicle.clone())?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &spawns {
            if !seen.insert(s.id.clone()) {
                return Err(CoreError::Config(format!("duplicate vehicle id `{}`", s.id)));
            }
        }
        let mut world = Self {
            elements: ElementStates::from_elements(&scene.traffic),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            scene,
            model,
            clock,
            frame_cadence,
            lidar_cadence,
            spawns,
            slots: BTreeMap::new(),
            cfg,
        };
        world.reset();
        Ok(world)
    }

    /// `n` vehicles `V1..Vn` on the scene's spawn poses in declaration order.
    pub fn spawns_from_scene(scene: &Scene, n: usize) -> Result<Vec<VehicleSpawn>, CoreError> {
        if n > scene.spawns.len() {
            return Err(CoreError::Config(format!(
                "scene `{}` declares {} spawn poses, {n} vehicles requested",
                scene.name,
                scene.spawns.len()
            )));
        }
        Ok(scene.spawns[..n]
            .iter()
            .enumerate()
            .map(|(i, s)| VehicleSpawn {
                id: format!("V{}", i + 1),
                pose: s.pose,
            })
            .collect())
    }

    /// Restores the scene-initial state: vehicles, clock, elements, noise.
    pub fn reset(&mut self) {
        self.clock.reset();
        self.elements = ElementStates::from_elements(&self.scene.traffic);
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        self.slots = self
            .spawns
            .iter()
            .map(|s| {
                let state = self.model.initial_state(s.pose);
                let slot = Slot {
                    lidar: self.scan(&state),
                    state,
                    prev_velocity: Vec2::zeros(),
                    command: ActuationCommand::default(),
                };
                (s.id.clone(), slot)
            })
            .collect();
    }

    fn scan(&self, state: &VehicleState) -> Vec<f64> {
        let [x, y, z] = self.cfg.vehicle.lidar.mount;
        let pose = state.transform().compose(&crate::transform::Transform3::from_translation(x, y, z));
        lidar::scan_lidar(&pose, &self.scene, &self.cfg.vehicle.lidar)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Vehicle {
        &self.model
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn spawns(&self) -> &[VehicleSpawn] {
        &self.spawns
    }

    pub fn vehicle_ids(&self) -> impl Iterator<Item = &String> {
        self.slots.keys()
    }

    pub fn has_vehicle(&self, id: &str) -> bool {
        self.slots.contains_key(id)
    }

    pub fn state(&self, id: &str) -> Option<&VehicleState> {
        self.slots.get(id).map(|s| &s.state)
    }

    pub fn command(&self, id: &str) -> Option<ActuationCommand> {
        self.slots.get(id).map(|s| s.command)
    }

    pub fn elements(&self) -> &ElementStates {
        &self.elements
    }

    /// Sets the command held by a vehicle from the next tick on.
    pub fn set_command(&mut self, id: &str, cmd: ActuationCommand) -> Result<(), CoreError> {
        let slot = self
            .slots
            .get_mut(id)
            .ok_or_else(|| CoreError::UnknownVehicle(id.to_string()))?;
        slot.command = cmd.clamped().0;
        Ok(())
    }

    pub fn set_element(&mut self, id: &str, state: LightState) -> Result<ElementChange, CoreError> {
        self.elements.set(id, state)
    }

    /// Advances one physics tick.
    pub fn step(&mut self) -> Result<TickOutput, CoreError> {
        let dt = self.cfg.dt;
        let mut previous: BTreeMap<String, ChassisState> = BTreeMap::new();
        let mut next: BTreeMap<String, VehicleState> = BTreeMap::new();
        for (id, slot) in &self.slots {
            previous.insert(id.clone(), slot.state.chassis);
            next.insert(id.clone(), self.model.step(&slot.state, &slot.command, &self.scene, dt)?);
        }
        self.resolve_contacts(&mut next, &previous);
        for (id, state) in next {
            let slot = self.slots.get_mut(&id).expect("same key set");
            slot.prev_velocity = slot.state.chassis.world_velocity();
            slot.state = state;
        }
        self.clock.advance();
        let tick = self.clock.ticks();

        if self.lidar_cadence.fires(tick) {
            let scans: Vec<(String, Vec<f64>)> =
                self.slots.iter().map(|(id, s)| (id.clone(), self.scan(&s.state))).collect();
            for (id, scan) in scans {
                self.slots.get_mut(&id).expect("same key set").lidar = scan;
            }
        }
        let frames = if self.frame_cadence.fires(tick) {
            let ids: Vec<String> = self.slots.keys().cloned().collect();
            ids.iter().map(|id| self.sample_frame(id)).collect()
        } else {
            Vec::new()
        };
        Ok(TickOutput {
            tick,
            time: self.clock.time(),
            frames,
            peers: self.peers(),
        })
    }

    /// Serialized contact phase: overlapping vehicles both stop at their
    /// pre-tick poses. Repeats until no new overlap appears.
    fn resolve_contacts(&self, next: &mut BTreeMap<String, VehicleState>, previous: &BTreeMap<String, ChassisState>) {
        let ids: Vec<String> = next.keys().cloned().collect();
        let mut halted = std::collections::BTreeSet::new();
        loop {
            let mut fresh = std::collections::BTreeSet::new();
            for (a, ia) in ids.iter().enumerate() {
                for ib in &ids[a + 1..] {
                    let pa = self.model.footprint(&next[ia].chassis).polygon();
                    let pb = self.model.footprint(&next[ib].chassis).polygon();
                    if pa.overlaps_convex(&pb) {
                        fresh.extend([ia, ib].into_iter().filter(|id| !halted.contains(*id)).cloned());
                    }
                }
            }
            if fresh.is_empty() {
                return;
            }
            for id in fresh {
                self.model.halt(next.get_mut(&id).expect("known id"), &previous[&id]);
                halted.insert(id);
            }
        }
    }

    pub fn peers(&self) -> Vec<PeerState> {
        let t = self.clock.time();
        self.slots
            .iter()
            .map(|(id, s)| PeerState {
                vehicle_id: id.clone(),
                position: [s.state.chassis.x, s.state.chassis.y],
                yaw: s.state.chassis.psi,
                velocity: s.state.chassis.v_x,
                timestamp: t,
            })
            .collect()
    }

    fn sample_frame(&mut self, id: &str) -> SensorFrame {
        build_frame(&self.cfg, &self.clock, id, &self.slots[id], &mut self.rng, true)
    }

    /// Noise-free frame of the current state, for snapshots outside the
    /// sensor cadence. Leaves the noise generator untouched.
    pub fn snapshot_frame(&self, id: &str) -> Option<SensorFrame> {
        let slot = self.slots.get(id)?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Some(build_frame(&self.cfg, &self.clock, id, slot, &mut unused, false))
    }
}

fn build_frame(cfg: &WorldConfig, clock: &SimClock, id: &str, slot: &Slot, rng: &mut ChaCha8Rng, noisy: bool) -> SensorFrame {
    let vc = &cfg.vehicle;
    let st = &slot.state;
    let gain = if noisy { 1.0 } else { 0.0 };
    let ips = read_ips(&st.transform(), gain * vc.ips_noise_std, rng);
    let mut imu = read_imu(&st.chassis, slot.prev_velocity, cfg.dt, vc.gravity_mode);
    add_imu_noise(&mut imu, gain * vc.imu_accel_noise_std, gain * vc.imu_gyro_noise_std, rng);
    SensorFrame {
        timestamp: clock.time(),
        tick: clock.ticks(),
        vehicle_id: id.to_string(),
        throttle_fb: st.throttle,
        steer_fb: st.steer,
        enc_ticks: encoder::read_encoders(vc.encoder_cpr(), st.wheels[RL].revs_accum, st.wheels[RR].revs_accum),
        ips,
        imu_accel: imu.accel,
        imu_gyro: imu.gyro,
        imu_euler: imu.euler,
        imu_quat: imu.quat,
        lidar: slot.lidar.clone(),
        collision: st.collided,
    }
}
