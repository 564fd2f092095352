use twinsim_core::scene::geometry::OrientedRect;
use twinsim_core::scene::{fixture_source, ElementKind, Scene, FIXTURE_NAMES};
use twinsim_core::VehicleConfig;

#[test]
fn every_bundled_scene_loads() {
    for name in FIXTURE_NAMES {
        let scene = Scene::fixture(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(scene.name, *name);
        assert!(fixture_source(name).unwrap().starts_with('#'), "{name} lacks its header comment");
    }
}

#[test]
fn parking_school_contents() {
    let s = Scene::fixture("parking_school").unwrap();
    assert_eq!(s.collision.len(), 7);
    assert_eq!(s.spawns.len(), 1);
    assert_eq!(s.goals.len(), 1);
}

#[test]
fn intersection_has_four_lights_and_matching_goals() {
    let s = Scene::fixture("intersection_school").unwrap();
    let cfg = VehicleConfig::default();
    let lights = s.traffic.iter().filter(|e| e.kind == ElementKind::TrafficLight).count();
    assert_eq!(lights, 4);
    for spawn in &s.spawns {
        assert!(s.goal(&spawn.name).is_some(), "no goal for {}", spawn.name);
        let pose = spawn.pose;
        let body = OrientedRect::new(pose.position(), pose.yaw, cfg.body_length, cfg.body_width);
        assert!(!s.footprint_collision(&body), "{} spawns inside an obstacle", spawn.name);
    }
    assert!(s.route("south_to_north").is_some());
}

#[test]
fn unknown_fixture_names_the_alternatives() {
    let err = Scene::fixture("nowhere").unwrap_err().to_string();
    assert!(err.contains("square_room"), "{err}");
}
