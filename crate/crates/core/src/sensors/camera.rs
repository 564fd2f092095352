//! Pinhole camera matrix pipeline: view, projection, perspective divide.
//!
//! The camera frame follows the usual graphics convention: x right, y up,
//! looking down −z.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::config::CameraIntrinsics;
use crate::error::CoreError;
use crate::scene::Landmark;
use crate::transform::Transform3;

/// Symmetric frustum half-extents `(R, T)` at the near plane, from
/// `f = 2N / (R − L)` with the sensor half-size in place of the unit image.
pub fn frustum_half_extents(intr: &CameraIntrinsics) -> (f64, f64) {
    let right = intr.near * (intr.s_x / 2.0) / intr.f;
    let top = intr.near * (intr.s_y / 2.0) / intr.f;
    (right, top)
}

/// Horizontal field of view implied by focal length and sensor width, deg.
pub fn horizontal_fov_deg(intr: &CameraIntrinsics) -> f64 {
    2.0 * (intr.s_x / (2.0 * intr.f)).atan().to_degrees()
}

pub fn vertical_fov_deg(intr: &CameraIntrinsics) -> f64 {
    2.0 * (intr.s_y / (2.0 * intr.f)).atan().to_degrees()
}

/// World → camera: the homogeneous inverse of the camera pose.
pub fn view_matrix(camera_pose: &Transform3) -> Matrix4<f64> {
    camera_pose.invert().to_homogeneous()
}

pub fn projection_matrix(intr: &CameraIntrinsics) -> Matrix4<f64> {
    let (r, t) = frustum_half_extents(intr);
    let (l, b) = (-r, -t);
    let (n, f) = (intr.near, intr.far);
    Matrix4::new(
        2.0 * n / (r - l), 0.0, (r + l) / (r - l), 0.0,
        0.0, 2.0 * n / (t - b), (t + b) / (t - b), 0.0,
        0.0, 0.0, -(f + n) / (f - n), -2.0 * f * n / (f - n),
        0.0, 0.0, -1.0, 0.0,
    )
}

/// Rotation taking camera axes into the vehicle frame (x forward, y left,
/// z up) for a forward-looking camera.
pub fn forward_camera_rotation() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Camera pose in the world for a vehicle at `vehicle_pose`.
pub fn camera_pose(vehicle_pose: &Transform3, intr: &CameraIntrinsics) -> Transform3 {
    let [x, y, z] = intr.mount;
    let mount = Transform3::new(forward_camera_rotation(), Vector3::new(x, y, z))
        .expect("fixed camera rotation is proper");
    vehicle_pose.compose(&mount)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub ndc: [f64; 2],
    /// Pixel coordinates, origin top-left, y down.
    pub pixel: [f64; 2],
    /// In front of the camera and between the near and far planes.
    pub depth_ok: bool,
    /// Distance along the optical axis, m (negative behind the camera).
    pub depth: f64,
}

pub fn project_point(
    view: &Matrix4<f64>,
    proj: &Matrix4<f64>,
    intr: &CameraIntrinsics,
    world: &Vector3<f64>,
) -> Result<Projection, CoreError> {
    let eye = view * Vector4::new(world.x, world.y, world.z, 1.0);
    let clip = proj * eye;
    if clip.w == 0.0 {
        return Err(CoreError::ProjectionUndefined);
    }
    let ndc = Vector2::new(clip.x / clip.w, clip.y / clip.w);
    let depth = -eye.z;
    Ok(Projection {
        ndc: [ndc.x, ndc.y],
        pixel: [
            (ndc.x + 1.0) / 2.0 * intr.width as f64,
            (1.0 - ndc.y) / 2.0 * intr.height as f64,
        ],
        depth_ok: depth >= intr.near && depth <= intr.far,
        depth,
    })
}

/// Inverse of [`project_point`] given the depth along the optical axis.
pub fn unproject(camera_pose: &Transform3, intr: &CameraIntrinsics, ndc: [f64; 2], depth: f64) -> Vector3<f64> {
    let (r, t) = frustum_half_extents(intr);
    let eye = Vector3::new(ndc[0] * r * depth / intr.near, ndc[1] * t * depth / intr.near, -depth);
    camera_pose.apply(&eye)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkObservation {
    pub id: String,
    pub ndc: [f64; 2],
    pub pixel: [f64; 2],
}

/// Ideal landmark camera: every scene landmark inside the view frustum.
pub fn observe_landmarks(camera_pose: &Transform3, intr: &CameraIntrinsics, landmarks: &[Landmark]) -> Vec<LandmarkObservation> {
    let view = view_matrix(camera_pose);
    let proj = projection_matrix(intr);
    landmarks
        .iter()
        .filter_map(|lm| {
            let p = project_point(&view, &proj, intr, &Vector3::from(lm.position)).ok()?;
            let inside = p.depth_ok && p.ndc[0].abs() <= 1.0 && p.ndc[1].abs() <= 1.0;
            inside.then(|| LandmarkObservation {
                id: lm.id.clone(),
                ndc: p.ndc,
                pixel: p.pixel,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    #[test]
    fn implied_fov() {
        // 2·atan(3.68 / 6.08), evaluated independently.
        let oracle = 2.0 * (0.605_263_157_894_736_8_f64).atan() * 180.0 / std::f64::consts::PI;
        assert!((horizontal_fov_deg(&intr()) - oracle).abs() < 1e-12);
        assert!((oracle - 62.37).abs() < 0.01);
    }

    #[test]
    fn view_examples() {
        assert_eq!(view_matrix(&Transform3::identity()), Matrix4::identity());
        // At (0, 0, 2) looking down world −z, which is the identity orientation.
        let pose = Transform3::from_translation(0.0, 0.0, 2.0);
        let v = view_matrix(&pose);
        let p = v * Vector4::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(p, Vector4::new(0.0, 0.0, -2.0, 1.0));
        let round = v * pose.to_homogeneous();
        assert!((round - Matrix4::identity()).amax() < 1e-12);
    }

    #[test]
    fn on_axis_point_hits_center_pixel() {
        let i = intr();
        let p = project_point(&Matrix4::identity(), &projection_matrix(&i), &i, &Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(p.ndc, [0.0, 0.0]);
        assert_eq!(p.pixel, [640.0, 360.0]);
        assert!(p.depth_ok);
    }

    #[test]
    fn behind_and_degenerate() {
        let i = intr();
        let proj = projection_matrix(&i);
        let p = project_point(&Matrix4::identity(), &proj, &i, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(!p.depth_ok);
        assert!(matches!(
            project_point(&Matrix4::identity(), &proj, &i, &Vector3::new(1.0, 0.0, 0.0)),
            Err(CoreError::ProjectionUndefined)
        ));
    }

    #[test]
    fn frustum_edges() {
        let i = intr();
        let (r, _) = frustum_half_extents(&i);
        let proj = projection_matrix(&i);
        let p = project_point(&Matrix4::identity(), &proj, &i, &Vector3::new(r, 0.0, -i.near)).unwrap();
        assert!((p.ndc[0] - 1.0).abs() < 1e-9);
        // Point at the half-FOV angle lands on the right edge.
        let half = (horizontal_fov_deg(&i) / 2.0).to_radians();
        let p = project_point(&Matrix4::identity(), &proj, &i, &Vector3::new(half.tan(), 0.0, -1.0)).unwrap();
        assert!((p.ndc[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vehicle_camera_looks_forward() {
        let i = intr();
        let pose = camera_pose(&Transform3::planar(1.0, 2.0, 0.0, std::f64::consts::FRAC_PI_2), &i);
        let ahead = pose.apply(&Vector3::new(0.0, 0.0, -1.0));
        // Vehicle heading +y; camera sits 0.08 m ahead of the vehicle origin.
        assert!((ahead - Vector3::new(1.0, 3.08, 0.12)).amax() < 1e-12);
        let lms = [Landmark { id: "a".into(), position: [1.0, 4.0, 0.12] }, Landmark { id: "b".into(), position: [1.0, 0.0, 0.12] }];
        let obs = observe_landmarks(&pose, &i, &lms);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].id, "a");
        assert!((obs[0].pixel[0] - 640.0).abs() < 1e-9);
    }
}
