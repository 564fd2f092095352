//! Planar 360° LIDAR by ray casting against the scene.

use crate::config::LidarSpec;
use crate::scene::geometry::Vec2;
use crate::scene::Scene;
use crate::transform::Transform3;

/// One range per beam; beam `i` points `theta_min + i·theta_res` degrees
/// counter-clockwise from the sensor's +x axis. Misses and returns outside
/// `[r_min, r_max]` read `∞`.
pub fn scan_lidar(pose: &Transform3, scene: &Scene, spec: &LidarSpec) -> Vec<f64> {
    let t = pose.translation();
    let origin = Vec2::new(t.x, t.y);
    let heading = pose.yaw();
    (0..spec.beam_count())
        .map(|i| {
            let theta = heading + (spec.theta_min + i as f64 * spec.theta_res).to_radians();
            let (s, c) = theta.sin_cos();
            match scene.raycast(origin, Vec2::new(c, s), spec.r_max) {
                Some(hit) if hit.distance >= spec.r_min => hit.distance,
                _ => f64::INFINITY,
            }
        })
        .collect()
}
