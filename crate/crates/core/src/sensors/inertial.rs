//! Indoor positioning and the inertial measurement unit.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{GravityMode, GRAVITY};
use crate::dynamics::vehicle::ChassisState;
use crate::scene::geometry::Vec2;
use crate::transform::{euler_to_quaternion, Transform3};

fn gaussian<R: Rng>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Translation of the vehicle pose plus optional per-axis Gaussian noise.
/// With `noise_std = 0` the generator is not touched.
pub fn read_ips<R: Rng>(pose: &Transform3, noise_std: f64, rng: &mut R) -> [f64; 3] {
    let t = pose.translation();
    if noise_std == 0.0 {
        return [t.x, t.y, t.z];
    }
    [
        t.x + gaussian(rng, noise_std),
        t.y + gaussian(rng, noise_std),
        t.z + gaussian(rng, noise_std),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    /// `[roll, pitch, yaw]`, rad.
    pub euler: [f64; 3],
    /// Scalar-first unit quaternion.
    pub quat: [f64; 4],
}

/// Body-frame acceleration from the finite difference of world velocity over
/// one tick, body angular rate and orientation.
pub fn read_imu(chassis: &ChassisState, prev_world_velocity: Vec2, dt: f64, gravity: GravityMode) -> ImuReading {
    let vel = chassis.world_velocity();
    let acc = (vel - prev_world_velocity) / dt;
    let (s, c) = chassis.psi.sin_cos();
    let g = match gravity {
        GravityMode::ProperForce => GRAVITY,
        GravityMode::Coordinate => 0.0,
    };
    let q = euler_to_quaternion(0.0, 0.0, chassis.psi);
    ImuReading {
        accel: [c * acc.x + s * acc.y, -s * acc.x + c * acc.y, g],
        gyro: [0.0, 0.0, chassis.psidot],
        euler: [0.0, 0.0, chassis.psi],
        quat: q.as_array(),
    }
}

/// Adds accelerometer and gyro noise in place; a zero σ leaves the channel
/// and the generator untouched.
pub fn add_imu_noise<R: Rng>(reading: &mut ImuReading, accel_std: f64, gyro_std: f64, rng: &mut R) {
    if accel_std > 0.0 {
        for a in &mut reading.accel {
            *a += gaussian(rng, accel_std);
        }
    }
    if gyro_std > 0.0 {
        for w in &mut reading.gyro {
            *w += gaussian(rng, gyro_std);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ips_exact_read_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(read_ips(&Transform3::identity(), 0.0, &mut rng), [0.0, 0.0, 0.0]);
        let p = Transform3::planar(1.5, -0.2, 0.0, 0.7);
        assert_eq!(read_ips(&p, 0.0, &mut rng), [1.5, -0.2, 0.0]);
    }

    #[test]
    fn ips_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| read_ips(&Transform3::identity(), 0.005, &mut rng)[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.005).abs() / 0.005 < 0.1);
    }

    #[test]
    fn stationary_gravity_modes() {
        let c = ChassisState::default();
        let r = read_imu(&c, Vec2::zeros(), 0.01, GravityMode::ProperForce);
        assert_eq!(r.accel, [0.0, 0.0, 9.81]);
        let r = read_imu(&c, Vec2::zeros(), 0.01, GravityMode::Coordinate);
        assert_eq!(r.accel, [0.0, 0.0, 0.0]);
        assert_eq!(r.quat, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn circle_centripetal() {
        let (v, radius, dt) = (0.2, 0.5, 0.01);
        let rate = v / radius;
        let at = |t: f64| ChassisState {
            x: radius * (rate * t).sin(),
            y: radius * (1.0 - (rate * t).cos()),
            psi: rate * t,
            v_x: v,
            v_y: 0.0,
            psidot: rate,
        };
        let prev = at(1.0 - dt).world_velocity();
        let r = read_imu(&at(1.0), prev, dt, GravityMode::Coordinate);
        let expected = v * v / radius;
        assert!((r.accel[1] - expected).abs() / expected < 0.02, "{:?}", r.accel);
        assert_eq!(r.gyro, [0.0, 0.0, rate]);
    }
}
