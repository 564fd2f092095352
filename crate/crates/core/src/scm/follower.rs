//! Pure-pursuit waypoint follower with proportional speed control.

use serde::{Deserialize, Serialize};

use crate::config::VehicleConfig;
use crate::dynamics::vehicle::ActuationCommand;
use crate::error::CoreError;
use crate::scene::Pose2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerParams {
    /// Arc-length lookahead along the path, m.
    pub lookahead: f64,
    pub wheelbase: f64,
    pub steer_limit: f64,
    pub cruise_speed: f64,
    /// Speed at full throttle, used as feed-forward, m/s.
    pub top_speed: f64,
    /// Throttle per m/s of speed error.
    pub speed_gain: f64,
    pub goal_tolerance: f64,
    /// Distance to the end of the path over which speed ramps down, m.
    pub slowdown: f64,
}

impl FollowerParams {
    pub fn for_vehicle(cfg: &VehicleConfig) -> Self {
        let top_speed = cfg.wheel_radius * cfg.max_wheel_speed;
        Self {
            lookahead: 0.25,
            wheelbase: cfg.wheelbase,
            steer_limit: cfg.steer_limit,
            cruise_speed: 0.75 * top_speed,
            top_speed,
            speed_gain: 3.0,
            goal_tolerance: 0.05,
            slowdown: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerOutput {
    pub command: ActuationCommand,
    pub done: bool,
    pub target: [f64; 2],
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Arc length along `path` of the point closest to `p`.
fn project(path: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut s0 = 0.0;
    for w in path.windows(2) {
        let d = sub(w[1], w[0]);
        let len = norm(d);
        let t = if len > 0.0 {
            let r = sub(p, w[0]);
            ((r[0] * d[0] + r[1] * d[1]) / (len * len)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [w[0][0] + t * d[0], w[0][1] + t * d[1]];
        let dist = norm(sub(p, q));
        if dist < best.0 {
            best = (dist, s0 + t * len);
        }
        s0 += len;
    }
    best.1
}

fn point_at(path: &[[f64; 2]], s: f64) -> [f64; 2] {
    let mut left = s;
    for w in path.windows(2) {
        let d = sub(w[1], w[0]);
        let len = norm(d);
        if left <= len && len > 0.0 {
            let t = left / len;
            return [w[0][0] + t * d[0], w[0][1] + t * d[1]];
        }
        left -= len;
    }
    *path.last().expect("non-empty path")
}

/// Steering toward the point `lookahead` metres further along the path;
/// positive steering turns left. Returns `done` with a zero command once the
/// last waypoint is within tolerance.
pub fn follow(pose: Pose2, speed: f64, path: &[[f64; 2]], p: &FollowerParams) -> Result<FollowerOutput, CoreError> {
    let Some(&end) = path.last() else {
        return Err(CoreError::EmptyPath);
    };
    let here = [pose.x, pose.y];
    let to_end = norm(sub(end, here));
    if to_end <= p.goal_tolerance {
        return Ok(FollowerOutput {
            command: ActuationCommand::default(),
            done: true,
            target: end,
        });
    }
    let target = if path.len() == 1 {
        end
    } else {
        point_at(path, project(path, here) + p.lookahead)
    };
    let r = sub(target, here);
    let (s, c) = pose.yaw.sin_cos();
    let local = [c * r[0] + s * r[1], -s * r[0] + c * r[1]];
    let ld = norm(local);
    let delta = if ld > 0.0 {
        let alpha = local[1].atan2(local[0]);
        (2.0 * p.wheelbase * alpha.sin() / ld).atan()
    } else {
        0.0
    };
    let v_ref = p.cruise_speed * (to_end / p.slowdown).min(1.0);
    let throttle = v_ref / p.top_speed + p.speed_gain * (v_ref - speed);
    Ok(FollowerOutput {
        command: ActuationCommand::new(throttle.clamp(-1.0, 1.0), (delta / p.steer_limit).clamp(-1.0, 1.0)),
        done: false,
        target,
    })
}
