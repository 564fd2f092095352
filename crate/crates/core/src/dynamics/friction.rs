//! Two-piece cubic tire friction curve.
//!
//! Segment 0 rises from the origin with slope `k0` to the extremum
//! `(Se, Fe)`; segment 1 falls from the extremum to the asymptote
//! `(Sa, Fa)` with zero slope at both ends. Beyond `Sa` the curve is flat at
//! `Fa`, and negative slips use the odd extension.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::config::FrictionParams;
use crate::error::CoreError;

/// Cubic `a·u³ + b·u² + c·u + d` in the local coordinate `u = S − start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicSegment {
    pub start: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicSegment {
    pub fn eval(&self, s: f64) -> f64 {
        let u = s - self.start;
        ((self.a * u + self.b) * u + self.c) * u + self.d
    }

    pub fn slope(&self, s: f64) -> f64 {
        let u = s - self.start;
        (3.0 * self.a * u + 2.0 * self.b) * u + self.c
    }

    /// Solves for the cubic over `[start, start + h]` with end values and
    /// end slopes `(v0, m0)`, `(v1, m1)`.
    fn hermite(start: f64, h: f64, v0: f64, m0: f64, v1: f64, m1: f64) -> Result<Self, CoreError> {
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0,         0.0,     0.0, 1.0,
            0.0,         0.0,     1.0, 0.0,
            h * h * h,   h * h,   h,   1.0,
            3.0 * h * h, 2.0 * h, 1.0, 0.0,
        );
        let rhs = Vector4::new(v0, m0, v1, m1);
        let x = m
            .lu()
            .solve(&rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| CoreError::FrictionCurve(format!("singular segment system (h = {h:e})")))?;
        Ok(Self {
            start,
            a: x[0],
            b: x[1],
            c: x[2],
            d: x[3],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionCurve {
    pub se: f64,
    pub fe: f64,
    pub sa: f64,
    pub fa: f64,
    pub k0: f64,
    pub segments: [CubicSegment; 2],
}

const MIN_SEGMENT: f64 = 1e-9;

impl FrictionCurve {
    pub fn new(se: f64, fe: f64, sa: f64, fa: f64, k0: f64) -> Result<Self, CoreError> {
        if !(se > 0.0 && sa > se) {
            return Err(CoreError::FrictionCurve(format!(
                "slips must satisfy 0 < Se < Sa (got Se = {se}, Sa = {sa})"
            )));
        }
        if !(fa > 0.0 && fe >= fa) {
            return Err(CoreError::FrictionCurve(format!(
                "forces must satisfy Fe ≥ Fa > 0 (got Fe = {fe}, Fa = {fa})"
            )));
        }
        if !(k0 > 0.0 && k0.is_finite()) {
            return Err(CoreError::FrictionCurve(format!("initial slope must be positive, got {k0}")));
        }
        if sa - se < MIN_SEGMENT {
            return Err(CoreError::FrictionCurve(format!(
                "degenerate second segment: Sa − Se = {:e}",
                sa - se
            )));
        }
        let rise = CubicSegment::hermite(0.0, se, 0.0, k0, fe, 0.0)?;
        let fall = CubicSegment::hermite(se, sa - se, fe, 0.0, fa, 0.0)?;
        Ok(Self {
            se,
            fe,
            sa,
            fa,
            k0,
            segments: [rise, fall],
        })
    }

    pub fn from_params(p: &FrictionParams) -> Result<Self, CoreError> {
        Self::new(p.se, p.fe, p.sa, p.fa, p.k0)
    }

    /// Friction force per unit normal load at slip `s`.
    pub fn eval(&self, s: f64) -> f64 {
        let m = s.abs();
        let f = if m < self.se {
            self.segments[0].eval(m)
        } else if m < self.sa {
            self.segments[1].eval(m)
        } else {
            self.fa
        };
        if s < 0.0 {
            -f
        } else {
            f
        }
    }

    /// dF/dS. Even in `s`.
    pub fn slope(&self, s: f64) -> f64 {
        let m = s.abs();
        if m < self.se {
            self.segments[0].slope(m)
        } else if m < self.sa {
            self.segments[1].slope(m)
        } else {
            0.0
        }
    }

    /// Secant slope `F(S)/S`, which stays positive on the falling branch.
    pub fn secant(&self, s: f64) -> f64 {
        if s.abs() < 1e-12 {
            self.k0
        } else {
            self.eval(s) / s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_curve() -> FrictionCurve {
        FrictionCurve::from_params(&FrictionParams::default()).unwrap()
    }

    #[test]
    fn interpolation_nodes_are_exact() {
        let c = default_curve();
        assert_eq!(c.eval(0.0), 0.0);
        assert_eq!(c.eval(c.se), c.fe);
        assert_eq!(c.eval(c.sa), c.fa);
        assert_eq!(c.eval(-c.se), -c.fe);
    }

    #[test]
    fn extremum_and_asymptote_slopes_vanish() {
        let c = default_curve();
        assert!(c.segments[0].slope(c.se).abs() < 1e-9);
        assert!(c.segments[1].slope(c.se).abs() < 1e-9);
        assert!(c.segments[1].slope(c.sa).abs() < 1e-9);
        assert!((c.segments[0].slope(0.0) - c.k0).abs() < 1e-9);
    }

    #[test]
    fn saturates_beyond_asymptote() {
        let c = default_curve();
        assert_eq!(c.eval(2.0 * c.sa), c.fa);
        assert_eq!(c.eval(-5.0), -c.fa);
    }

    #[test]
    fn matches_hermite_basis_oracle() {
        // Cubic Hermite basis on [0, Se], t = S/Se:
        // f0 = Fe·(3t² − 2t³) + k0·Se·(t³ − 2t² + t). At S = 0.1, t = 0.5:
        // 1.0·0.5 + 10·0.2·0.125 = 0.75.
        let c = default_curve();
        assert!((c.eval(0.1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(FrictionCurve::new(0.2, 1.0, 0.2, 0.75, 10.0).is_err());
        assert!(FrictionCurve::new(0.2, 1.0, 0.2 + 1e-12, 0.75, 10.0).is_err());
        assert!(FrictionCurve::new(0.0, 1.0, 0.6, 0.75, 10.0).is_err());
        assert!(FrictionCurve::new(0.2, 0.5, 0.6, 0.75, 10.0).is_err());
        assert!(FrictionCurve::new(0.2, 1.0, 0.6, 0.75, 0.0).is_err());
    }

    #[test]
    fn rising_segment_is_monotone_for_defaults() {
        let c = default_curve();
        let mut prev = c.eval(0.0);
        for i in 1..=2000 {
            let s = c.se * i as f64 / 2000.0;
            let f = c.eval(s);
            assert!(f >= prev - 1e-15, "not monotone at S = {s}");
            prev = f;
        }
    }
}
