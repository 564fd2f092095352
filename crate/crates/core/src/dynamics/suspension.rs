//! Per-corner sprung/unsprung mass pair.
//!
//! Displacements are measured from static equilibrium, so gravity and the
//! static spring preload cancel. The sprung mass obeys
//! `M·Z̈ + B·(Ż − ż) + K·(Z − z) = −F_ext`, the unsprung mass
//! `m·z̈ + B·(ż − Ż) + K·(z − Z) = ΔN`, where `ΔN` is the change of the
//! ground reaction from its static value. The ground is a unilateral
//! spring-damper: it can push but never pull.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SuspensionCornerState {
    /// Sprung displacement `Z`, m.
    pub sprung_disp: f64,
    /// `Ż`, m/s.
    pub sprung_vel: f64,
    /// Unsprung displacement `z`, m.
    pub unsprung_disp: f64,
    /// `ż`, m/s.
    pub unsprung_vel: f64,
    /// Suspension force `B(Ż − ż) + K(Z − z)` from the last step, N.
    pub force: f64,
    /// Ground normal load on the tire, N.
    pub normal_load: f64,
}

impl SuspensionCornerState {
    pub fn at_rest(static_load: f64) -> Self {
        Self {
            normal_load: static_load,
            ..Self::default()
        }
    }

    /// `½MŻ² + ½mż² + ½K(Z − z)²`.
    pub fn energy(&self, p: &SuspensionParams) -> f64 {
        let stretch = self.sprung_disp - self.unsprung_disp;
        0.5 * p.sprung_mass * self.sprung_vel * self.sprung_vel
            + 0.5 * p.unsprung_mass * self.unsprung_vel * self.unsprung_vel
            + 0.5 * p.stiffness * stretch * stretch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspensionParams {
    pub sprung_mass: f64,
    pub unsprung_mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    /// Ground contact stiffness. Zero disables ground contact entirely.
    pub tire_stiffness: f64,
    pub tire_damping: f64,
    /// Ground reaction at equilibrium, `(M + m)·g`.
    pub static_load: f64,
    /// Bump-stop limit on `|Z|` and `|z|`.
    pub travel: f64,
}

impl SuspensionParams {
    /// A free two-mass pair with no ground contact and no bump stops.
    pub fn free(sprung_mass: f64, unsprung_mass: f64, damping: f64, stiffness: f64) -> Self {
        Self {
            sprung_mass,
            unsprung_mass,
            damping,
            stiffness,
            tire_stiffness: 0.0,
            tire_damping: 0.0,
            static_load: 0.0,
            travel: f64::INFINITY,
        }
    }

    /// Substep bound that keeps the fastest mode resolved (about twelve steps
    /// per period of the stiffest pairing).
    pub fn max_stable_step(&self) -> f64 {
        let m = self.unsprung_mass.min(self.sprung_mass);
        let k = self.stiffness + self.tire_stiffness;
        let c = self.damping + self.tire_damping;
        let by_stiffness = 0.5 / (k / m).sqrt();
        let by_damping = if c > 0.0 { 0.5 * m / c } else { f64::INFINITY };
        by_stiffness.min(by_damping)
    }

    fn validate(&self, dt: f64) -> Result<(), CoreError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CoreError::Config(format!("suspension dt must be positive, got {dt}")));
        }
        if !(self.sprung_mass > 0.0 && self.unsprung_mass > 0.0) {
            return Err(CoreError::Config("suspension masses must be positive".into()));
        }
        if self.damping < 0.0 || self.stiffness < 0.0 {
            return Err(CoreError::Config("suspension B and K must be non-negative".into()));
        }
        Ok(())
    }
}

/// Advances one corner by `dt` with the trapezoidal rule. `external_load` is
/// a downward force on the sprung mass (load transfer), N.
///
/// The corner is linear while the tire touches the ground, so the update is
/// `(I − dt/2·A)·y' = (I + dt/2·A)·y + dt·b` on `y = [Z, Ż, z, ż]`. For the
/// linear pair this dissipates exactly `dt·B·v̄²` per step, with `v̄` the
/// midpoint relative velocity, so energy never grows. Contact is decided
/// from the state at the start of the step.
pub fn suspension_step(
    corner: &SuspensionCornerState,
    p: &SuspensionParams,
    external_load: f64,
    dt: f64,
) -> Result<SuspensionCornerState, CoreError> {
    p.validate(dt)?;
    let c = corner;
    let force = p.damping * (c.sprung_vel - c.unsprung_vel)
        + p.stiffness * (c.sprung_disp - c.unsprung_disp);
    let grounded = p.tire_stiffness > 0.0;
    let normal_load = if grounded {
        (p.static_load - p.tire_stiffness * c.unsprung_disp - p.tire_damping * c.unsprung_vel).max(0.0)
    } else {
        0.0
    };
    let in_contact = grounded && normal_load > 0.0;

    let (ms, mu, b, k) = (p.sprung_mass, p.unsprung_mass, p.damping, p.stiffness);
    let (kt, ct) = if in_contact {
        (p.tire_stiffness, p.tire_damping)
    } else {
        (0.0, 0.0)
    };
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0,      1.0,      0.0,              0.0,
        -k / ms,  -b / ms,  k / ms,           b / ms,
        0.0,      0.0,      0.0,              1.0,
        k / mu,   b / mu,   -(k + kt) / mu,   -(b + ct) / mu,
    );
    // Airborne, the ground reaction drops from its static value to zero.
    let lift = if grounded && !in_contact { -p.static_load } else { 0.0 };
    let forcing = Vector4::new(0.0, -external_load / ms, 0.0, lift / mu);
    let y = Vector4::new(c.sprung_disp, c.sprung_vel, c.unsprung_disp, c.unsprung_vel);
    let h = 0.5 * dt;
    let lhs = Matrix4::identity() - a * h;
    let rhs = y + (a * y) * h + forcing * dt;
    let y1 = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CoreError::SimFault {
            quantity: "suspension system".into(),
        })?;

    let mut next = SuspensionCornerState {
        sprung_disp: y1[0],
        sprung_vel: y1[1],
        unsprung_disp: y1[2],
        unsprung_vel: y1[3],
        force,
        normal_load,
    };
    if next.sprung_disp.abs() > p.travel {
        next.sprung_disp = next.sprung_disp.clamp(-p.travel, p.travel);
        next.sprung_vel = 0.0;
    }
    if next.unsprung_disp.abs() > p.travel {
        next.unsprung_disp = next.unsprung_disp.clamp(-p.travel, p.travel);
        next.unsprung_vel = 0.0;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grounded() -> SuspensionParams {
        SuspensionParams {
            sprung_mass: 0.25,
            unsprung_mass: 0.03,
            damping: 2.5,
            stiffness: 250.0,
            tire_stiffness: 5000.0,
            tire_damping: 5.0,
            static_load: 0.28 * 9.81,
            travel: 0.02,
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = grounded();
        let mut c = SuspensionCornerState::at_rest(p.static_load);
        for _ in 0..1000 {
            c = suspension_step(&c, &p, 0.0, 0.001).unwrap();
        }
        assert_eq!(c.sprung_disp, 0.0);
        assert_eq!(c.unsprung_disp, 0.0);
        assert_eq!(c.normal_load, p.static_load);
    }

    #[test]
    fn rejects_non_positive_dt() {
        let p = grounded();
        let c = SuspensionCornerState::default();
        assert!(suspension_step(&c, &p, 0.0, 0.0).is_err());
        assert!(suspension_step(&c, &p, 0.0, -1e-3).is_err());
    }

    #[test]
    fn undamped_frequency() {
        // A very heavy unsprung mass pins z at zero, leaving M·Z̈ = −K·Z.
        let (m_s, k) = (0.25, 250.0);
        let p = SuspensionParams::free(m_s, 1e12, 0.0, k);
        let expected_hz = (k / m_s).sqrt() / (2.0 * PI);
        let dt = 0.001;
        let mut c = SuspensionCornerState {
            sprung_disp: 0.01,
            ..Default::default()
        };
        let mut crossings = Vec::new();
        let mut t = 0.0;
        while crossings.len() < 21 {
            let next = suspension_step(&c, &p, 0.0, dt).unwrap();
            t += dt;
            if c.sprung_disp.signum() != next.sprung_disp.signum() {
                // Linear interpolation of the zero crossing.
                let frac = c.sprung_disp / (c.sprung_disp - next.sprung_disp);
                crossings.push(t - dt + frac * dt);
            }
            c = next;
        }
        // 21 crossings span 10 full periods.
        let measured_hz = 10.0 / (crossings[20] - crossings[0]);
        assert!(
            (measured_hz - expected_hz).abs() / expected_hz < 0.02,
            "{measured_hz} vs {expected_hz}"
        );
    }

    #[test]
    fn load_transfer_compresses_and_raises_normal_load() {
        let p = grounded();
        let mut c = SuspensionCornerState::at_rest(p.static_load);
        for _ in 0..5000 {
            c = suspension_step(&c, &p, 0.5, 0.001).unwrap();
        }
        assert!(c.sprung_disp < 0.0);
        assert!((c.normal_load - (p.static_load + 0.5)).abs() < 1e-3, "{}", c.normal_load);
    }

    #[test]
    fn ground_never_pulls() {
        let p = grounded();
        let mut c = SuspensionCornerState {
            unsprung_vel: 3.0,
            ..SuspensionCornerState::at_rest(p.static_load)
        };
        for _ in 0..200 {
            c = suspension_step(&c, &p, 0.0, 0.0005).unwrap();
            assert!(c.normal_load >= 0.0);
            assert!(c.sprung_disp.abs() <= p.travel && c.unsprung_disp.abs() <= p.travel);
        }
    }
}
