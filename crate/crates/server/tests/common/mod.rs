#![allow(dead_code)]

use tokio::net::TcpListener;
use twinsim_core::scene::fixture_source;
use twinsim_core::session::SessionConfig;
use twinsim_core::world::WorldConfig;
use twinsim_server::{Bridge, BridgeConfig, Pacing};

pub fn session(scene: &str, vehicles: usize, seed: u64) -> SessionConfig {
    let world = WorldConfig {
        seed,
        ..WorldConfig::default()
    };
    SessionConfig::from_scene_source(fixture_source(scene).unwrap().into(), world, vehicles).unwrap()
}

pub async fn bridge(cfg: BridgeConfig) -> Bridge {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    Bridge::start(listener, cfg).await.unwrap()
}

pub async fn realtime(scene: &str, vehicles: usize) -> Bridge {
    bridge(BridgeConfig::new(session(scene, vehicles, 0))).await
}

pub async fn lockstep(scene: &str, vehicles: usize, seed: u64) -> Bridge {
    let mut s = session(scene, vehicles, seed);
    s.lockstep = true;
    let mut cfg = BridgeConfig::new(s);
    cfg.pacing = Pacing::Unpaced;
    bridge(cfg).await
}
