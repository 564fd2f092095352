//! Vehicle calibration constants and the config-file loader.
//!
//! Defaults describe the 1:14-scale vehicle. Some values are printed hardware
//! ratings (encoder resolution, gear ratio, steering saturation and slew, top
//! wheel speed, sensor specs); the rest are desk-scale estimates and are
//! marked as such below.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// How the IMU reports linear acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GravityMode {
    /// Specific force, as a physical accelerometer reads it (+g on z at rest).
    #[default]
    ProperForce,
    /// Coordinate acceleration only.
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub r_min: f64,
    pub r_max: f64,
    /// Degrees.
    pub theta_min: f64,
    /// Degrees.
    pub theta_max: f64,
    /// Degrees.
    pub theta_res: f64,
    /// Scan rate, Hz.
    pub rate: f64,
    /// Mount position on the vehicle (x forward, y left, z up), m.
    pub mount: [f64; 3],
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            r_min: 0.15,
            r_max: 12.0,
            theta_min: 0.0,
            theta_max: 360.0,
            theta_res: 1.0,
            rate: 7.0,
            mount: [0.0, 0.0, 0.1],
        }
    }
}

impl LidarSpec {
    pub fn beam_count(&self) -> usize {
        ((self.theta_max - self.theta_min) / self.theta_res).round() as usize
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(CoreError::Config(format!(
                "lidar ranges must satisfy 0 < r_min < r_max (got {} / {})",
                self.r_min, self.r_max
            )));
        }
        if !(self.theta_res > 0.0) || self.theta_max <= self.theta_min {
            return Err(CoreError::Config("lidar angular range is empty".into()));
        }
        let span = (self.theta_max - self.theta_min) / self.theta_res;
        if (span - span.round()).abs() > 1e-9 {
            return Err(CoreError::Config(format!(
                "lidar theta_res {} does not divide the angular range",
                self.theta_res
            )));
        }
        if !(self.rate > 0.0) {
            return Err(CoreError::Config("lidar rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Focal length, mm.
    pub f: f64,
    /// Sensor width, mm.
    pub s_x: f64,
    /// Sensor height, mm.
    pub s_y: f64,
    pub width: u32,
    pub height: u32,
    /// Near clipping plane, m.
    pub near: f64,
    /// Far clipping plane, m.
    pub far: f64,
    /// Mount position on the vehicle, m.
    pub mount: [f64; 3],
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            f: 3.04,
            s_x: 3.68,
            s_y: 2.76,
            width: 1280,
            height: 720,
            near: 0.01,
            far: 1000.0,
            mount: [0.08, 0.0, 0.12],
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.f > 0.0 && self.s_x > 0.0 && self.s_y > 0.0) {
            return Err(CoreError::Config("camera f, s_x, s_y must be positive".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(CoreError::Config("camera planes must satisfy 0 < near < far".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CoreError::Config("camera resolution must be non-zero".into()));
        }
        Ok(())
    }
}

/// Control points of a two-piece cubic friction curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionParams {
    pub se: f64,
    pub fe: f64,
    pub sa: f64,
    pub fa: f64,
    pub k0: f64,
}

impl Default for FrictionParams {
    // Invented defaults; the curve shape is only shown qualitatively.
    fn default() -> Self {
        Self {
            se: 0.2,
            fe: 1.0,
            sa: 0.6,
            fa: 0.75,
            k0: 10.0,
        }
    }
}

/// All physical and calibration constants of one vehicle.
///
/// Corner arrays are ordered front-left, front-right, rear-left, rear-right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    /// Model scale, `1:scale`.
    pub scale: f64,
    /// Wheelbase `l`, m (desk-scale estimate).
    pub wheelbase: f64,
    /// Track width `w`, m (desk-scale estimate).
    pub track_width: f64,
    /// Wheel radius, m. Back-derived from 130 RPM ≈ 0.267 m/s.
    pub wheel_radius: f64,
    pub wheel_mass: f64,
    pub sprung_mass: [f64; 4],
    pub spring_stiffness: [f64; 4],
    pub damping: [f64; 4],
    /// Vertical tire stiffness of the ground contact, N/m.
    pub tire_stiffness: f64,
    pub tire_damping: f64,
    /// Bump-stop limit on suspension displacement from static equilibrium, m.
    pub suspension_travel: f64,
    /// Height of the center of mass for load transfer, m.
    pub cg_height: f64,
    pub encoder_ppr: u32,
    pub gear_ratio: u32,
    /// Encoder counts per output-shaft revolution; overrides `encoder_ppr`
    /// (as `cpr / gear_ratio`) when given in a config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder_cpr: Option<u32>,
    /// Steering saturation, rad.
    pub steer_limit: f64,
    /// Steering slew limit, rad/s.
    pub steer_rate: f64,
    /// No-load output-shaft speed, rad/s.
    pub max_wheel_speed: f64,
    /// Stall torque of one drive motor at the wheel, N·m.
    pub drive_torque_max: f64,
    /// Holding torque applied at zero throttle, N·m.
    pub brake_torque: f64,
    pub friction_longitudinal: FrictionParams,
    pub friction_lateral: FrictionParams,
    /// Body footprint used for collision, m.
    pub body_length: f64,
    pub body_width: f64,
    /// Chassis speed above `speed_guard × top speed` is treated as a fault.
    pub speed_guard: f64,
    pub gravity_mode: GravityMode,
    /// Standard deviation of IPS noise per axis, m.
    pub ips_noise_std: f64,
    /// Standard deviation of IMU accelerometer noise, m/s².
    pub imu_accel_noise_std: f64,
    /// Standard deviation of IMU gyro noise, rad/s.
    pub imu_gyro_noise_std: f64,
    pub lidar: LidarSpec,
    pub camera: CameraIntrinsics,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            scale: 14.0,
            wheelbase: 0.141,
            track_width: 0.153,
            wheel_radius: 0.0196,
            wheel_mass: 0.03,
            sprung_mass: [0.25; 4],
            spring_stiffness: [250.0; 4],
            damping: [2.5; 4],
            tire_stiffness: 5000.0,
            tire_damping: 5.0,
            suspension_travel: 0.02,
            cg_height: 0.04,
            encoder_ppr: 16,
            gear_ratio: 120,
            encoder_cpr: None,
            steer_limit: 30f64.to_radians(),
            steer_rate: 0.805,
            max_wheel_speed: 13.6,
            drive_torque_max: 0.03,
            brake_torque: 0.02,
            friction_longitudinal: FrictionParams::default(),
            friction_lateral: FrictionParams::default(),
            body_length: 0.22,
            body_width: 0.17,
            speed_guard: 1.5,
            gravity_mode: GravityMode::ProperForce,
            ips_noise_std: 0.0,
            imu_accel_noise_std: 0.0,
            imu_gyro_noise_std: 0.0,
            lidar: LidarSpec::default(),
            camera: CameraIntrinsics::default(),
        }
    }
}

pub const GRAVITY: f64 = 9.81;

impl VehicleConfig {
    /// Parses and validates a TOML config document. Missing keys take their
    /// defaults; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        let mut cfg: VehicleConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.normalize()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn normalize(&mut self) -> Result<(), CoreError> {
        if let Some(cpr) = self.encoder_cpr.take() {
            if self.gear_ratio == 0 || cpr % self.gear_ratio != 0 {
                return Err(CoreError::Config(format!(
                    "encoder_cpr {cpr} is not a multiple of gear_ratio {}",
                    self.gear_ratio
                )));
            }
            self.encoder_ppr = cpr / self.gear_ratio;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        fn positive(name: &str, v: f64) -> Result<(), CoreError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CoreError::Config(format!("{name} must be positive, got {v}")))
            }
        }
        fn non_negative(name: &str, v: f64) -> Result<(), CoreError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(CoreError::Config(format!("{name} must be non-negative, got {v}")))
            }
        }
        positive("scale", self.scale)?;
        positive("wheelbase", self.wheelbase)?;
        positive("track_width", self.track_width)?;
        positive("wheel_radius", self.wheel_radius)?;
        positive("wheel_mass", self.wheel_mass)?;
        for i in 0..4 {
            positive(&format!("sprung_mass[{i}]"), self.sprung_mass[i])?;
            positive(&format!("spring_stiffness[{i}]"), self.spring_stiffness[i])?;
            non_negative(&format!("damping[{i}]"), self.damping[i])?;
        }
        positive("tire_stiffness", self.tire_stiffness)?;
        non_negative("tire_damping", self.tire_damping)?;
        positive("suspension_travel", self.suspension_travel)?;
        non_negative("cg_height", self.cg_height)?;
        if self.encoder_ppr < 1 {
            return Err(CoreError::Config("encoder_ppr must be at least 1".into()));
        }
        if self.gear_ratio < 1 {
            return Err(CoreError::Config("gear_ratio must be at least 1".into()));
        }
        if !(self.steer_limit > 0.0 && self.steer_limit < std::f64::consts::FRAC_PI_2) {
            return Err(CoreError::Config(format!(
                "steer_limit must lie in (0, π/2), got {}",
                self.steer_limit
            )));
        }
        positive("steer_rate", self.steer_rate)?;
        positive("max_wheel_speed", self.max_wheel_speed)?;
        positive("drive_torque_max", self.drive_torque_max)?;
        non_negative("brake_torque", self.brake_torque)?;
        positive("body_length", self.body_length)?;
        positive("body_width", self.body_width)?;
        positive("speed_guard", self.speed_guard)?;
        non_negative("ips_noise_std", self.ips_noise_std)?;
        non_negative("imu_accel_noise_std", self.imu_accel_noise_std)?;
        non_negative("imu_gyro_noise_std", self.imu_gyro_noise_std)?;
        self.lidar.validate()?;
        self.camera.validate()?;
        Ok(())
    }

    /// Encoder counts per output-shaft revolution.
    pub fn encoder_cpr(&self) -> u32 {
        self.encoder_ppr * self.gear_ratio
    }

    pub fn total_mass(&self) -> f64 {
        self.sprung_mass.iter().sum::<f64>() + 4.0 * self.wheel_mass
    }

    /// Wheel spin inertia `½·m·r²`.
    pub fn wheel_inertia(&self) -> f64 {
        0.5 * self.wheel_mass * self.wheel_radius * self.wheel_radius
    }

    /// Free-rolling top speed `r · ω_max`.
    pub fn top_speed(&self) -> f64 {
        self.wheel_radius * self.max_wheel_speed
    }
}
