//! Drive motors, steering servo and the Ackermann linkage.

use crate::config::VehicleConfig;

/// Motor torque on a driven wheel for a non-zero throttle: a linear
/// speed-torque line from stall torque to zero at the no-load speed.
/// Returns `(torque, d torque / d omega)`.
pub fn motor_torque(omega: f64, throttle: f64, cfg: &VehicleConfig) -> (f64, f64) {
    let tau = throttle * cfg.drive_torque_max * (1.0 - omega.abs() / cfg.max_wheel_speed);
    let dir = if omega != 0.0 { omega.signum() } else { throttle.signum() };
    let slope = -throttle * cfg.drive_torque_max * dir / cfg.max_wheel_speed;
    (tau, slope)
}

/// Idle holding torque: opposes the wheel's motion with at most
/// `brake_torque`, never more than needed to stop it this step.
pub fn brake_torque(omega: f64, load_torque: f64, inertia: f64, cfg: &VehicleConfig, dt: f64) -> f64 {
    let cancel = load_torque - inertia * omega / dt;
    cancel.clamp(-cfg.brake_torque, cfg.brake_torque)
}

/// Advances one driven wheel's spin `omega` by `dt` under `throttle` and an
/// opposing `load_torque` (tire reaction), with `I = ½·m·r²`.
///
/// The back-EMF term is integrated implicitly so the wheel approaches the
/// no-load speed monotonically; zero throttle applies the holding brake.
pub fn drive_step(omega: f64, throttle: f64, cfg: &VehicleConfig, load_torque: f64, dt: f64) -> f64 {
    let inertia = cfg.wheel_inertia();
    let next = if throttle == 0.0 {
        let tau = brake_torque(omega, load_torque, inertia, cfg, dt);
        omega + dt * (tau - load_torque) / inertia
    } else {
        let (tau, slope) = motor_torque(omega, throttle, cfg);
        let stiff = slope.min(0.0);
        omega + dt * (tau - load_torque) / (inertia - dt * stiff)
    };
    next.clamp(-cfg.max_wheel_speed, cfg.max_wheel_speed)
}

/// Rate-limited steering servo toward `target` (rad), saturated at the
/// configured steering limit.
pub fn steer_step(current: f64, target: f64, cfg: &VehicleConfig, dt: f64) -> f64 {
    let goal = target.clamp(-cfg.steer_limit, cfg.steer_limit);
    let max_step = cfg.steer_rate * dt;
    let delta = goal - current;
    if delta.abs() <= max_step {
        goal
    } else {
        current + max_step.copysign(delta)
    }
}

/// Splits the commanded steering angle into left and right wheel angles so
/// both wheel axes meet the rear-axle line at one turning center. Positive
/// angles turn left (the left wheel is then the inner wheel).
pub fn ackermann_split(delta: f64, wheelbase: f64, track: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let t = delta.tan();
    let two_l = 2.0 * wheelbase;
    let left = (two_l * t / (two_l - track * t)).atan();
    let right = (two_l * t / (two_l + track * t)).atan();
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_wheel_stays_at_rest() {
        let cfg = VehicleConfig::default();
        assert_eq!(drive_step(0.0, 0.0, &cfg, 0.0, 0.01), 0.0);
    }

    #[test]
    fn full_throttle_converges_to_no_load_speed() {
        let cfg = VehicleConfig::default();
        let mut w = 0.0;
        let mut prev = 0.0;
        for _ in 0..2000 {
            w = drive_step(w, 1.0, &cfg, 0.0, 0.01);
            assert!(w <= cfg.max_wheel_speed);
            assert!(w >= prev);
            prev = w;
        }
        assert!((w - 13.6).abs() < 1e-9, "{w}");
    }

    #[test]
    fn reverse_throttle_mirrors_forward() {
        let cfg = VehicleConfig::default();
        let (mut f, mut r) = (0.0, 0.0);
        for _ in 0..100 {
            f = drive_step(f, 0.6, &cfg, 0.0, 0.01);
            r = drive_step(r, -0.6, &cfg, 0.0, 0.01);
            assert_eq!(f, -r);
        }
    }

    #[test]
    fn idle_brake_decays_without_reversal() {
        let cfg = VehicleConfig::default();
        let mut w: f64 = 5.0;
        let mut steps = 0;
        while w != 0.0 {
            let next = drive_step(w, 0.0, &cfg, 0.0, 0.001);
            assert!(next >= 0.0 && next < w);
            w = next;
            steps += 1;
            assert!(steps < 100_000);
        }
        assert!(steps > 1, "brake torque limit should take more than one step");
    }

    #[test]
    fn brake_holds_against_small_load() {
        let cfg = VehicleConfig::default();
        let w = drive_step(0.0, 0.0, &cfg, 0.5 * cfg.brake_torque, 0.01);
        assert_eq!(w, 0.0);
    }

    #[test]
    fn steering_examples() {
        let cfg = VehicleConfig::default();
        assert_eq!(steer_step(0.0, 0.0, &cfg, 0.01), 0.0);
        let s = steer_step(0.0, 30f64.to_radians(), &cfg, 0.01);
        assert!((s - 0.00805).abs() < 1e-15);
        let mut s = 0.0;
        for _ in 0..200 {
            s = steer_step(s, 45f64.to_radians(), &cfg, 0.01);
        }
        assert_eq!(s, 30f64.to_radians());
    }

    #[test]
    fn ackermann_zero_and_inner_wheel() {
        assert_eq!(ackermann_split(0.0, 0.2, 0.1), (0.0, 0.0));
        let (l, r) = ackermann_split(20f64.to_radians(), 0.2, 0.1);
        assert!(l > r && r > 0.0);
        let (l, r) = ackermann_split(-20f64.to_radians(), 0.2, 0.1);
        assert!(r.abs() > l.abs() && l < 0.0);
    }

    #[test]
    fn ackermann_closed_form_oracle() {
        // Independent evaluation with the turning radius R = l / tan δ measured
        // at the rear-axle center: inner wheel tan = l / (R − w/2).
        let (l, w, d) = (0.2, 0.1, 20f64.to_radians());
        let radius = l / d.tan();
        let inner = (l / (radius - w / 2.0)).atan();
        let outer = (l / (radius + w / 2.0)).atan();
        let (dl, dr) = ackermann_split(d, l, w);
        assert!((dl - inner).abs() < 1e-12);
        assert!((dr - outer).abs() < 1e-12);
    }
}
