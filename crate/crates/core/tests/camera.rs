use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinsim_core::config::CameraIntrinsics;
use twinsim_core::scene::Landmark;
use twinsim_core::sensors::camera::{
    camera_pose, frustum_half_extents, observe_landmarks, project_point, projection_matrix, unproject, view_matrix,
};
use twinsim_core::Transform3;

#[test]
fn projection_round_trip_in_frustum() {
    let intr = CameraIntrinsics::default();
    let pose = camera_pose(&Transform3::planar(0.4, -0.3, 0.0, 0.7), &intr);
    let (view, proj) = (view_matrix(&pose), projection_matrix(&intr));
    let (r, t) = frustum_half_extents(&intr);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let depth = rng.random_range(0.05..20.0);
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let eye = Vector3::new(u * r * depth / intr.near, v * t * depth / intr.near, -depth);
        let world = pose.apply(&eye);
        let p = project_point(&view, &proj, &intr, &world).unwrap();
        assert!(p.depth_ok);
        assert!((p.ndc[0] - u).abs() < 1e-9 && (p.ndc[1] - v).abs() < 1e-9);
        let back = unproject(&pose, &intr, p.ndc, p.depth);
        worst = worst.max((back - world).norm());
    }
    assert!(worst < 1e-6, "worst round-trip error {worst} m");
}

#[test]
fn landmark_ahead_is_seen_centred() {
    let intr = CameraIntrinsics::default();
    let vehicle = Transform3::planar(0.0, 0.0, 0.0, 0.0);
    let [mx, my, mz] = intr.mount;
    let ahead = Landmark {
        id: "a".into(),
        position: [mx + 1.0, my, mz],
    };
    let behind = Landmark {
        id: "b".into(),
        position: [mx - 1.0, my, mz],
    };
    let seen = observe_landmarks(&camera_pose(&vehicle, &intr), &intr, &[ahead, behind]);
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].id, "a");
    assert!(seen[0].ndc[0].abs() < 1e-12 && seen[0].ndc[1].abs() < 1e-12);
    assert!((seen[0].pixel[0] - intr.width as f64 / 2.0).abs() < 1e-9);
}

#[test]
fn left_of_the_vehicle_is_left_in_the_image() {
    let intr = CameraIntrinsics::default();
    let pose = camera_pose(&Transform3::identity(), &intr);
    let p = project_point(
        &view_matrix(&pose),
        &projection_matrix(&intr),
        &intr,
        &Vector3::new(2.0, 0.3, intr.mount[2]),
    )
    .unwrap();
    assert!(p.ndc[0] < 0.0);
}
