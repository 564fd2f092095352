//! Planar chassis with four slipping wheels and per-corner suspension.
//!
//! The tire–wheel coupling is very stiff (`I_w` is a few 1e-6 kg·m²), so the
//! chassis velocities and wheel spins are advanced together with one
//! linearly implicit Euler step per tick. Friction enters the Jacobian through
//! its secant slope `F(S)/S`, which keeps the linearization positive on the
//! falling branch of the curve.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::actuators::{ackermann_split, brake_torque, motor_torque, steer_step};
use super::friction::FrictionCurve;
use super::suspension::{suspension_step, SuspensionCornerState, SuspensionParams};
use super::tire::{lateral_slip, longitudinal_slip, SLIP_EPS_V};
use crate::config::{VehicleConfig, GRAVITY};
use crate::error::CoreError;
use crate::scene::geometry::{OrientedRect, Vec2};
use crate::scene::{Pose2, Scene};
use crate::transform::Transform3;

pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;

const N: usize = 7;
type Mat = SMatrix<f64, N, N>;
type Vec7 = SVector<f64, N>;

/// Normalized actuation command: both channels in `[−1, 1]`; steering is
/// scaled by the steering limit, positive turns left.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuationCommand {
    pub throttle: f64,
    pub steering: f64,
}

impl ActuationCommand {
    pub fn new(throttle: f64, steering: f64) -> Self {
        Self { throttle, steering }
    }

    /// Clamps both channels into `[−1, 1]`; returns whether anything changed.
    /// Non-finite values become zero.
    pub fn clamped(self) -> (Self, bool) {
        let fix = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        let out = Self {
            throttle: fix(self.throttle),
            steering: fix(self.steering),
        };
        (out, out != self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelState {
    pub omega: f64,
    pub steer_angle: f64,
    /// Signed revolutions since reset.
    pub revs_accum: f64,
    pub slip_x: f64,
    pub slip_y: f64,
    /// Tire forces in the wheel frame, N.
    pub force_x: f64,
    pub force_y: f64,
    pub normal_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChassisState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// Body-frame velocities, m/s.
    pub v_x: f64,
    pub v_y: f64,
    pub psidot: f64,
}

impl ChassisState {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.psi)
    }

    pub fn world_velocity(&self) -> Vec2 {
        let (s, c) = self.psi.sin_cos();
        Vec2::new(c * self.v_x - s * self.v_y, s * self.v_x + c * self.v_y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub chassis: ChassisState,
    /// FL, FR, RL, RR.
    pub wheels: [WheelState; 4],
    pub suspension: [SuspensionCornerState; 4],
    /// Servo steering angle, rad.
    pub steer: f64,
    /// Throttle applied this tick.
    pub throttle: f64,
    /// Body-frame planar acceleration over the last tick, m/s².
    pub accel: [f64; 2],
    /// Latched until reset.
    pub collided: bool,
}

impl VehicleState {
    pub fn transform(&self) -> Transform3 {
        Transform3::planar(self.chassis.x, self.chassis.y, 0.0, self.chassis.psi)
    }

    fn check_finite(&self) -> Result<(), CoreError> {
        let c = &self.chassis;
        let named = [
            ("x", c.x),
            ("y", c.y),
            ("psi", c.psi),
            ("v_x", c.v_x),
            ("v_y", c.v_y),
            ("psidot", c.psidot),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(CoreError::SimFault { quantity: name.into() });
            }
        }
        for (i, w) in self.wheels.iter().enumerate() {
            for (name, v) in [("omega", w.omega), ("force_x", w.force_x), ("force_y", w.force_y)] {
                if !v.is_finite() {
                    return Err(CoreError::SimFault {
                        quantity: format!("wheel[{i}].{name}"),
                    });
                }
            }
        }
        for (i, s) in self.suspension.iter().enumerate() {
            if !(s.sprung_disp.is_finite() && s.unsprung_disp.is_finite() && s.normal_load.is_finite()) {
                return Err(CoreError::SimFault {
                    quantity: format!("suspension[{i}]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct TireEval {
    vl: f64,
    vt: f64,
    denom: f64,
    slip_x: f64,
    slip_y: f64,
    f_l: f64,
    f_t: f64,
    k_l: f64,
    k_t: f64,
}

/// Immutable per-vehicle model built once from a [`VehicleConfig`].
#[derive(Debug, Clone)]
pub struct Vehicle {
    cfg: VehicleConfig,
    curve_x: FrictionCurve,
    curve_y: FrictionCurve,
    /// Wheel contact points relative to the center of mass, body frame.
    corners: [Vec2; 4],
    suspension: [SuspensionParams; 4],
    mass: f64,
    yaw_inertia: f64,
    wheel_inertia: f64,
}

impl Vehicle {
    pub fn new(cfg: VehicleConfig) -> Result<Self, CoreError> {
        cfg.validate()?;
        let curve_x = FrictionCurve::from_params(&cfg.friction_longitudinal)?;
        let curve_y = FrictionCurve::from_params(&cfg.friction_lateral)?;
        let (hl, hw) = (cfg.wheelbase / 2.0, cfg.track_width / 2.0);
        let corners = [
            Vec2::new(hl, hw),
            Vec2::new(hl, -hw),
            Vec2::new(-hl, hw),
            Vec2::new(-hl, -hw),
        ];
        let suspension = std::array::from_fn(|i| SuspensionParams {
            sprung_mass: cfg.sprung_mass[i],
            unsprung_mass: cfg.wheel_mass,
            damping: cfg.damping[i],
            stiffness: cfg.spring_stiffness[i],
            tire_stiffness: cfg.tire_stiffness,
            tire_damping: cfg.tire_damping,
            static_load: (cfg.sprung_mass[i] + cfg.wheel_mass) * GRAVITY,
            travel: cfg.suspension_travel,
        });
        let mass = cfg.total_mass();
        let sprung: f64 = cfg.sprung_mass.iter().sum();
        let body = sprung * (cfg.body_length.powi(2) + cfg.body_width.powi(2)) / 12.0;
        let wheels: f64 = corners.iter().map(|c| cfg.wheel_mass * c.norm_squared()).sum();
        Ok(Self {
            curve_x,
            curve_y,
            corners,
            suspension,
            mass,
            yaw_inertia: body + wheels,
            wheel_inertia: cfg.wheel_inertia(),
            cfg,
        })
    }

    pub fn config(&self) -> &VehicleConfig {
        &self.cfg
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn corner(&self, i: usize) -> Vec2 {
        self.corners[i]
    }

    pub fn suspension_params(&self, i: usize) -> &SuspensionParams {
        &self.suspension[i]
    }

    /// At rest at `pose` with every suspension corner in static equilibrium.
    pub fn initial_state(&self, pose: Pose2) -> VehicleState {
        let suspension = std::array::from_fn(|i| SuspensionCornerState::at_rest(self.suspension[i].static_load));
        let wheels = std::array::from_fn(|i| WheelState {
            normal_load: self.suspension[i].static_load,
            ..WheelState::default()
        });
        VehicleState {
            chassis: ChassisState {
                x: pose.x,
                y: pose.y,
                psi: pose.yaw,
                ..ChassisState::default()
            },
            wheels,
            suspension,
            steer: 0.0,
            throttle: 0.0,
            accel: [0.0, 0.0],
            collided: false,
        }
    }

    pub fn footprint(&self, chassis: &ChassisState) -> OrientedRect {
        OrientedRect::new(
            Vec2::new(chassis.x, chassis.y),
            chassis.psi,
            self.cfg.body_length,
            self.cfg.body_width,
        )
    }

    /// Advances one tick: dynamics, then the scene collision check.
    pub fn step(
        &self,
        state: &VehicleState,
        cmd: &ActuationCommand,
        scene: &Scene,
        dt: f64,
    ) -> Result<VehicleState, CoreError> {
        let mut next = self.step_dynamics(state, cmd, scene, dt)?;
        if scene.footprint_collision(&self.footprint(&next.chassis)) {
            self.halt(&mut next, &state.chassis);
        }
        Ok(next)
    }

    /// Stop-on-contact: restores the pre-tick pose, zeroes all motion and
    /// latches the collision flag.
    pub fn halt(&self, state: &mut VehicleState, previous: &ChassisState) {
        state.chassis = ChassisState {
            x: previous.x,
            y: previous.y,
            psi: previous.psi,
            ..ChassisState::default()
        };
        for w in &mut state.wheels {
            w.omega = 0.0;
        }
        state.collided = true;
    }

    fn wheel_angles(&self, steer: f64) -> [f64; 4] {
        let (l, r) = ackermann_split(steer, self.cfg.wheelbase, self.cfg.track_width);
        [l, r, 0.0, 0.0]
    }

    fn tire(&self, u: &Vec7, i: usize, angle: f64, f_z: f64, mu: f64) -> TireEval {
        let p = self.corners[i];
        let (v_x, v_y, r) = (u[0], u[1], u[2]);
        let (s, c) = angle.sin_cos();
        let vxw = v_x - r * p.y;
        let vyw = v_y + r * p.x;
        let vl = c * vxw + s * vyw;
        let vt = -s * vxw + c * vyw;
        let denom = vl.abs().max(SLIP_EPS_V);
        let slip_x = longitudinal_slip(self.cfg.wheel_radius, u[3 + i], vl);
        let slip_y = lateral_slip(vl, vt);
        let load = mu * f_z.max(0.0);
        TireEval {
            vl,
            vt,
            denom,
            slip_x,
            slip_y,
            f_l: load * self.curve_x.eval(slip_x),
            f_t: -load * self.curve_y.eval(slip_y),
            k_l: load * self.curve_x.secant(slip_x),
            k_t: load * self.curve_y.secant(slip_y),
        }
    }

    fn step_dynamics(
        &self,
        state: &VehicleState,
        cmd: &ActuationCommand,
        scene: &Scene,
        dt: f64,
    ) -> Result<VehicleState, CoreError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CoreError::Config(format!("dt must be positive, got {dt}")));
        }
        let cfg = &self.cfg;
        let (cmd, _) = cmd.clamped();
        let ch = &state.chassis;

        // (1) steering servo and linkage
        let steer = steer_step(state.steer, cmd.steering * cfg.steer_limit, cfg, dt);
        let angles = self.wheel_angles(steer);

        // Terrain friction under each wheel; off-map wheels see asphalt and
        // the collision check stops the vehicle anyway.
        let (sp, cp) = ch.psi.sin_cos();
        let mu: [f64; 4] = std::array::from_fn(|i| {
            let p = self.corners[i];
            let world = Vec2::new(ch.x + cp * p.x - sp * p.y, ch.y + sp * p.x + cp * p.y);
            scene.terrain_at(world).unwrap_or(1.0)
        });
        let f_z: [f64; 4] = std::array::from_fn(|i| state.suspension[i].normal_load);

        // (2)+(3) drive, tires and chassis velocities in one implicit step
        let u = Vec7::from_column_slice(&[
            ch.v_x,
            ch.v_y,
            ch.psidot,
            state.wheels[0].omega,
            state.wheels[1].omega,
            state.wheels[2].omega,
            state.wheels[3].omega,
        ]);
        let tires: [TireEval; 4] = std::array::from_fn(|i| self.tire(&u, i, angles[i], f_z[i], mu[i]));

        let r_w = cfg.wheel_radius;
        let iw = self.wheel_inertia;
        let mut g = Vec7::zeros();
        let mut jac = Mat::zeros();
        let (mut fx, mut fy, mut mz) = ([0.0; 4], [0.0; 4], [0.0; 4]);

        for i in 0..4 {
            let t = &tires[i];
            let p = self.corners[i];
            let (s, c) = angles[i].sin_cos();
            fx[i] = c * t.f_l - s * t.f_t;
            fy[i] = s * t.f_l + c * t.f_t;
            mz[i] = p.x * fy[i] - p.y * fx[i];

            // d(vl)/dq and d(vt)/dq for q = v_x, v_y, psidot
            let dvl = [c, s, -c * p.y + s * p.x];
            let dvt = [-s, c, s * p.y + c * p.x];
            let mut dfl = [0.0; N];
            let mut dft = [0.0; N];
            for q in 0..3 {
                dfl[q] = -t.k_l / t.denom * dvl[q];
                dft[q] = -t.k_t / t.denom * dvt[q];
            }
            dfl[3 + i] = t.k_l * r_w / t.denom;
            for q in 0..N {
                let dfx = c * dfl[q] - s * dft[q];
                let dfy = s * dfl[q] + c * dft[q];
                jac[(0, q)] += dfx / self.mass;
                jac[(1, q)] += dfy / self.mass;
                jac[(2, q)] += (p.x * dfy - p.y * dfx) / self.yaw_inertia;
                jac[(3 + i, q)] -= r_w * dfl[q] / iw;
            }
        }

        let driven = [false, false, true, true];
        for i in 0..4 {
            let load = r_w * tires[i].f_l;
            let tau = if !driven[i] {
                0.0
            } else if cmd.throttle == 0.0 {
                brake_torque(u[3 + i], load, iw, cfg, dt)
            } else {
                let (tau, slope) = motor_torque(u[3 + i], cmd.throttle, cfg);
                jac[(3 + i, 3 + i)] += slope.min(0.0) / iw;
                tau
            };
            g[3 + i] = (tau - load) / iw;
        }

        // Kinematic coupling of the rotating body frame. Sums are grouped
        // front pair plus rear pair so mirrored motion stays bit-symmetric.
        let sum = |a: [f64; 4]| (a[FL] + a[FR]) + (a[RL] + a[RR]);
        g[0] = sum(fx) / self.mass + ch.psidot * ch.v_y;
        g[1] = sum(fy) / self.mass - ch.psidot * ch.v_x;
        g[2] = sum(mz) / self.yaw_inertia;
        jac[(0, 1)] += ch.psidot;
        jac[(0, 2)] += ch.v_y;
        jac[(1, 0)] -= ch.psidot;
        jac[(1, 2)] -= ch.v_x;

        let lhs = Mat::identity() - jac * dt;
        let delta = lhs
            .lu()
            .solve(&(g * dt))
            .ok_or_else(|| CoreError::SimFault {
                quantity: "implicit step matrix".into(),
            })?;
        let un = u + delta;

        let mut next = state.clone();
        next.steer = steer;
        next.throttle = cmd.throttle;
        for i in 0..4 {
            let w = &mut next.wheels[i];
            w.omega = un[3 + i].clamp(-cfg.max_wheel_speed, cfg.max_wheel_speed);
            w.steer_angle = angles[i];
        }

        // (4) suspension under quasi-static load transfer from the last tick
        let [a_x, a_y] = state.accel;
        let h = cfg.cg_height;
        let long = self.mass * a_x * h / (2.0 * cfg.wheelbase);
        let lat = self.mass * a_y * h / (2.0 * cfg.track_width);
        let transfer = [-long - lat, -long + lat, long - lat, long + lat];
        for i in 0..4 {
            let p = &self.suspension[i];
            let substeps = (dt / p.max_stable_step()).ceil().max(1.0) as usize;
            let h = dt / substeps as f64;
            let mut corner = state.suspension[i];
            for _ in 0..substeps {
                corner = suspension_step(&corner, p, transfer[i], h)?;
            }
            next.suspension[i] = corner;
        }

        // (5) pose
        let c = &mut next.chassis;
        c.v_x = un[0];
        c.v_y = un[1];
        c.psidot = un[2];
        let psi = ch.psi + dt * c.psidot;
        c.psi = psi;
        let vel = c.world_velocity();
        c.x = ch.x + dt * vel.x;
        c.y = ch.y + dt * vel.y;

        // (6) bookkeeping
        let old_vel = ch.world_velocity();
        let acc_world = (vel - old_vel) / dt;
        let (s, co) = psi.sin_cos();
        next.accel = [co * acc_world.x + s * acc_world.y, -s * acc_world.x + co * acc_world.y];
        let un_clamped = Vec7::from_fn(|k, _| if k < 3 { un[k] } else { next.wheels[k - 3].omega });
        for i in 0..4 {
            let t = self.tire(&un_clamped, i, angles[i], f_z[i], mu[i]);
            let w = &mut next.wheels[i];
            w.revs_accum += w.omega * dt / std::f64::consts::TAU;
            w.slip_x = t.slip_x;
            w.slip_y = t.slip_y;
            w.force_x = t.f_l;
            w.force_y = t.f_t;
            w.normal_load = next.suspension[i].normal_load;
            let _ = (t.vl, t.vt);
        }

        next.check_finite()?;
        let speed = next.chassis.v_x.hypot(next.chassis.v_y);
        if speed > cfg.speed_guard * cfg.top_speed() {
            return Err(CoreError::SimFault {
                quantity: format!("chassis speed {speed:.4} m/s exceeds the sanity guard"),
            });
        }
        Ok(next)
    }
}
