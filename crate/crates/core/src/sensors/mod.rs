//! Simulated sensor suite and the per-vehicle sensor frame.

pub mod camera;
pub mod encoder;
pub mod inertial;
pub mod lidar;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One timestamped bundle of every sensor reading for a vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp: f64,
    pub tick: u64,
    pub vehicle_id: String,
    pub throttle_fb: f64,
    /// Servo steering angle, rad.
    pub steer_fb: f64,
    /// Rear-left, rear-right.
    pub enc_ticks: [i64; 2],
    pub ips: [f64; 3],
    pub imu_accel: [f64; 3],
    pub imu_gyro: [f64; 3],
    pub imu_euler: [f64; 3],
    pub imu_quat: [f64; 4],
    /// Latest completed scan; `∞` travels as JSON `null`.
    #[serde(with = "ranges")]
    pub lidar: Vec<f64>,
    pub collision: bool,
}

/// Serializes non-finite ranges as `null` and reads `null` back as `∞`.
pub mod ranges {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|r| r.is_finite().then_some(*r)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opts.into_iter().map(|r| r.unwrap_or(f64::INFINITY)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_ranges_round_trip_as_null() {
        let f = SensorFrame {
            timestamp: 0.0,
            tick: 0,
            vehicle_id: "V1".into(),
            throttle_fb: 0.0,
            steer_fb: 0.0,
            enc_ticks: [0, 0],
            ips: [0.0; 3],
            imu_accel: [0.0; 3],
            imu_gyro: [0.0; 3],
            imu_euler: [0.0; 3],
            imu_quat: [1.0, 0.0, 0.0, 0.0],
            lidar: vec![1.5, f64::INFINITY],
            collision: false,
        };
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"lidar\":[1.5,null]"));
        let back: SensorFrame = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }
}
