use nalgebra::Vector3;
use proptest::prelude::*;

use twinsim_core::config::LidarSpec;
use twinsim_core::dynamics::suspension::{suspension_step, SuspensionCornerState, SuspensionParams};
use twinsim_core::scene::geometry::Vec2;
use twinsim_core::scene::Scene;
use twinsim_core::sensors::encoder::ticks;
use twinsim_core::sensors::lidar::scan_lidar;
use twinsim_core::transform::{euler_to_quaternion, quaternion_to_euler, Transform3};

fn transform() -> impl Strategy<Value = Transform3> {
    (
        -3.0..3.0f64,
        -1.4..1.4f64,
        -3.0..3.0f64,
        prop::array::uniform3(-5.0..5.0f64),
    )
        .prop_map(|(a, b, c, t)| Transform3::from_euler(a, b, c, Vector3::from(t)))
}

proptest! {
    #[test]
    fn composition_is_associative(a in transform(), b in transform(), c in transform()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn inverse_undoes_compose(a in transform(), p in prop::array::uniform3(-5.0..5.0f64)) {
        let p = Vector3::from(p);
        let back = a.invert().apply(&a.apply(&p));
        prop_assert!((back - p).norm() < 1e-9);
    }

    #[test]
    fn quaternion_round_trip(phi in -3.0..3.0f64, theta in -1.4..1.4f64, psi in -3.0..3.0f64) {
        let q = euler_to_quaternion(phi, theta, psi);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        let e = quaternion_to_euler(&q);
        prop_assert!((e[0] - phi).abs() < 1e-9);
        prop_assert!((e[1] - theta).abs() < 1e-9);
        prop_assert!((e[2] - psi).abs() < 1e-9);
    }

    #[test]
    fn raycast_hits_the_room_walls(x in -1.8..1.8f64, y in -1.8..1.8f64, angle in 0.0..std::f64::consts::TAU) {
        let scene = Scene::fixture("square_room").unwrap();
        let dir = Vec2::new(angle.cos(), angle.sin());
        let hit = scene.raycast(Vec2::new(x, y), dir, 100.0).expect("a closed room always returns");
        // Distance to the first inner face at ±2 along the ray.
        let tx = if dir.x > 0.0 { (2.0 - x) / dir.x } else if dir.x < 0.0 { (-2.0 - x) / dir.x } else { f64::INFINITY };
        let ty = if dir.y > 0.0 { (2.0 - y) / dir.y } else if dir.y < 0.0 { (-2.0 - y) / dir.y } else { f64::INFINITY };
        let expected = tx.min(ty);
        prop_assert!((hit.distance - expected).abs() < 1e-9, "{} vs {}", hit.distance, expected);
        let p = Vec2::new(x, y) + dir * hit.distance;
        prop_assert!((p - hit.point).norm() < 1e-9);
    }

    #[test]
    fn encoder_counts_are_monotone(cpr in 1u32..5000, a in -50.0..50.0f64, b in -50.0..50.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ticks(cpr, lo) <= ticks(cpr, hi));
    }

    #[test]
    fn free_suspension_never_gains_energy(
        ms in 0.05..2.0f64,
        mu in 0.01..0.5f64,
        b in 0.0..20.0f64,
        k in 10.0..2000.0f64,
        z0 in -0.01..0.01f64,
        v0 in -0.5..0.5f64,
    ) {
        let p = SuspensionParams::free(ms, mu, b, k);
        let mut c = SuspensionCornerState { sprung_disp: z0, unsprung_vel: v0, ..Default::default() };
        let mut e = c.energy(&p);
        let e0 = e;
        for _ in 0..500 {
            c = suspension_step(&c, &p, 0.0, 0.001).unwrap();
            let e1 = c.energy(&p);
            prop_assert!(e1 <= e + 1e-12 * e0, "{e1} > {e}");
            e = e1;
        }
    }
}

#[test]
fn lidar_scan_rotates_with_the_vehicle() {
    let scene = Scene::fixture("square_room").unwrap();
    let spec = LidarSpec::default();
    let base = scan_lidar(&Transform3::planar(0.3, -0.2, 0.0, 0.0), &scene, &spec);
    // Turning in place shifts every beam by a quarter of the scan.
    let turned = scan_lidar(&Transform3::planar(0.3, -0.2, 0.0, std::f64::consts::FRAC_PI_2), &scene, &spec);
    // The room is symmetric under a quarter turn about its centre, so turning
    // the whole configuration leaves the body-frame scan unchanged.
    let moved = scan_lidar(&Transform3::planar(0.2, 0.3, 0.0, std::f64::consts::FRAC_PI_2), &scene, &spec);
    for i in 0..360 {
        let j = (i + 90) % 360;
        assert!((turned[i] - base[j]).abs() < 1e-9, "beam {i}: {} vs {}", turned[i], base[j]);
        assert!((moved[i] - base[i]).abs() < 1e-9, "beam {i}: {} vs {}", moved[i], base[i]);
    }
}

#[test]
fn footprint_collision_is_frame_independent() {
    use twinsim_core::scene::geometry::OrientedRect;
    let scene = Scene::fixture("square_room").unwrap();
    // Same footprint against the east wall and, rotated a quarter turn, the north wall.
    for (offset, hits) in [(1.85, false), (1.95, true)] {
        let east = OrientedRect::new(Vec2::new(offset, 0.0), 0.0, 0.2, 0.1);
        let north = OrientedRect::new(Vec2::new(0.0, offset), std::f64::consts::FRAC_PI_2, 0.2, 0.1);
        assert_eq!(scene.footprint_collision(&east), hits);
        assert_eq!(scene.footprint_collision(&north), hits);
    }
}
