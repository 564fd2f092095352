//! Rigid-body transforms in SE(3) and orientation conversions.
//!
//! Euler angles follow the intrinsic Z-Y-X (yaw, pitch, roll) convention:
//! `R = Rz(psi) * Ry(theta) * Rx(phi)`. Quaternions are scalar-first
//! `(q0, q1, q2, q3)`.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

const ORTHO_TOL: f64 = 1e-9;

/// Homogeneous rigid transform `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Transform3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CoreError> {
        if !translation.iter().all(|v| v.is_finite()) || !rotation.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidTransform("non-finite entry".into()));
        }
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if drift > ORTHO_TOL {
            return Err(CoreError::InvalidTransform(format!(
                "rotation not orthonormal (|RᵀR − I| = {drift:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(CoreError::InvalidTransform(format!("det(R) = {det}")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rot_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Planar pose: yaw about +z, translation `(x, y, z)`.
    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn from_euler(phi_x: f64, theta_y: f64, psi_z: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: euler_to_matrix(phi_x, theta_y, psi_z),
            translation,
        }
    }

    pub fn with_translation(mut self, x: f64, y: f64, z: f64) -> Self {
        self.translation = Vector3::new(x, y, z);
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Transform3) -> Transform3 {
        let mut rotation = self.rotation * other.rotation;
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if drift > ORTHO_TOL {
            rotation = *Rotation3::from_matrix(&rotation).matrix();
        }
        Transform3 {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Transform3 {
        let rt = self.rotation.transpose();
        Transform3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Yaw angle of the rotation under the Z-Y-X convention.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn euler(&self) -> [f64; 3] {
        matrix_to_euler(&self.rotation)
    }

    pub fn quaternion(&self) -> Quaternion {
        let [phi, theta, psi] = self.euler();
        euler_to_quaternion(phi, theta, psi)
    }

    /// Largest absolute entry-wise difference from `other`.
    pub fn max_abs_diff(&self, other: &Transform3) -> f64 {
        (self.rotation - other.rotation)
            .amax()
            .max((self.translation - other.translation).amax())
    }
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub fn norm(&self) -> f64 {
        (self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3).sqrt()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }
}

pub fn euler_to_matrix(phi_x: f64, theta_y: f64, psi_z: f64) -> Matrix3<f64> {
    let (sr, cr) = phi_x.sin_cos();
    let (sp, cp) = theta_y.sin_cos();
    let (sy, cy) = psi_z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

pub fn matrix_to_euler(r: &Matrix3<f64>) -> [f64; 3] {
    let theta = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let phi = r[(2, 1)].atan2(r[(2, 2)]);
    let psi = r[(1, 0)].atan2(r[(0, 0)]);
    [phi, theta, psi]
}

/// Z-Y-X Euler angles to a unit quaternion.
pub fn euler_to_quaternion(phi_x: f64, theta_y: f64, psi_z: f64) -> Quaternion {
    let (sr, cr) = (0.5 * phi_x).sin_cos();
    let (sp, cp) = (0.5 * theta_y).sin_cos();
    let (sy, cy) = (0.5 * psi_z).sin_cos();
    let q = Quaternion {
        q0: cr * cp * cy + sr * sp * sy,
        q1: sr * cp * cy - cr * sp * sy,
        q2: cr * sp * cy + sr * cp * sy,
        q3: cr * cp * sy - sr * sp * cy,
    };
    let n = q.norm();
    Quaternion {
        q0: q.q0 / n,
        q1: q.q1 / n,
        q2: q.q2 / n,
        q3: q.q3 / n,
    }
}

pub fn quaternion_to_euler(q: &Quaternion) -> [f64; 3] {
    let Quaternion { q0, q1, q2, q3 } = *q;
    let phi = (2.0 * (q0 * q1 + q2 * q3)).atan2(1.0 - 2.0 * (q1 * q1 + q2 * q2));
    let theta = (2.0 * (q0 * q2 - q3 * q1)).clamp(-1.0, 1.0).asin();
    let psi = (2.0 * (q0 * q3 + q1 * q2)).atan2(1.0 - 2.0 * (q2 * q2 + q3 * q3));
    [phi, theta, psi]
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}
