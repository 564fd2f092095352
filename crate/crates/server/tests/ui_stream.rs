//! The message stream a teleoperation UI produces and consumes: take manual
//! control, drive a figure-eight, toggle a light, record, reset, export, and
//! replay the export.

mod common;

use twinsim_client::BridgeClient;
use twinsim_core::protocol::{
    Code, FrameFilter, FramePayload, Mode, MsgType, RecordAction, Role, ScmEvent, Subscriptions,
};
use twinsim_core::recorder::{replay, RecordDocument};
use twinsim_core::scene::LightState;

fn ui_subscriptions() -> Subscriptions {
    Subscriptions {
        frames: FrameFilter::All,
        peers: false,
        events: true,
    }
}

/// Drains queued messages, returning frames and events in arrival order.
fn drain(ui: &mut BridgeClient) -> (Vec<FramePayload>, Vec<ScmEvent>) {
    let (mut frames, mut events) = (Vec::new(), Vec::new());
    while let Some(e) = ui.try_next() {
        match e.kind {
            MsgType::Frame => frames.push(e.payload_as().unwrap()),
            MsgType::ScmEvent => events.push(e.payload_as().unwrap()),
            other => panic!("unexpected {other:?}"),
        }
    }
    (frames, events)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn ui_session_round_trip() {
    let bridge = common::lockstep("tiny_town", 1, 11).await;
    let mut ui = BridgeClient::connect(&bridge.ws_url(), Role::Ui, None, ui_subscriptions())
        .await
        .unwrap();
    let snap = ui.snapshot().clone();
    assert_eq!(snap.vehicles[0].mode, Mode::Autonomous);
    assert!(snap.elements.iter().any(|e| e.id == "L1"));

    // Manual takeover; the event precedes the ACK.
    let ack = ui.set_mode("V1", Mode::Manual).await.unwrap();
    assert_eq!(ack.data["mode"], "manual");
    let (_, events) = drain(&mut ui);
    assert!(matches!(
        events.as_slice(),
        [ScmEvent::Mode { mode: Mode::Manual, .. }]
    ));
    // Setting the same mode again is a no-op success.
    assert_eq!(ui.set_mode("V1", Mode::Manual).await.unwrap().code, Code::Ok);
    drain(&mut ui);

    ui.record(RecordAction::Start).await.unwrap();
    let mut frames = Vec::new();
    let mut light_tick = None;
    // Ten seconds of keyboard-style input: full lock one way, then the other.
    for k in 0..100u64 {
        let steer = if (k / 25) % 2 == 0 { 1.0 } else { -1.0 };
        let throttle = if k % 10 == 9 { 0.0 } else { 0.6 };
        ui.cmd(Some("V1"), throttle, steer).await.unwrap();
        if k == 40 {
            let ack = ui.set_light("L1", "red").await.unwrap();
            light_tick = Some(ack.data["tick"].as_u64().unwrap());
            let (_, events) = drain(&mut ui);
            assert!(matches!(
                events.as_slice(),
                [ScmEvent::Element { state: LightState::Red, .. }]
            ));
        }
        ui.step(10).await.unwrap();
        frames.extend(drain(&mut ui).0);
    }
    ui.record(RecordAction::Stop).await.unwrap();

    // Frames carry the light state they were taken with.
    let light_tick = light_tick.unwrap();
    let dt = snap.dt;
    let first_after = frames
        .iter()
        .find(|f| f.frame.timestamp > light_tick as f64 * dt)
        .unwrap();
    assert_eq!(first_after.elements["L1"].state, Some(LightState::Red));
    for f in frames.iter().filter(|f| f.frame.timestamp < light_tick as f64 * dt) {
        assert_eq!(f.elements["L1"].state, Some(LightState::Green));
    }
    assert!(frames.windows(2).all(|w| w[0].frame.timestamp < w[1].frame.timestamp));
    assert!((69..=71).contains(&frames.len()), "{} frames", frames.len());

    let csv = ui.export().await.unwrap();
    let doc = RecordDocument::parse(&csv).unwrap();
    assert!((69..=71).contains(&doc.segments[0].rows.len()));
    let report = replay(&doc).unwrap();
    assert!(report.is_exact(), "{report:?}");

    // Reset returns the scene to its initial state and announces it.
    let ack = ui.reset().await.unwrap();
    assert_eq!(ack.data["tick"], 0);
    let (_, events) = drain(&mut ui);
    assert!(events.iter().any(|e| matches!(e, ScmEvent::Reset { .. })));
    let after = BridgeClient::connect(&bridge.ws_url(), Role::Observer, None, ui_subscriptions())
        .await
        .unwrap();
    let s = after.snapshot();
    assert_eq!(s.tick, 0);
    assert_eq!(s.vehicles[0].peer.position, snap.vehicles[0].peer.position);
    assert_eq!(s.vehicles[0].peer.yaw, snap.vehicles[0].peer.yaw);
    let l1 = s.elements.iter().find(|e| e.id == "L1").unwrap();
    assert_eq!(l1.state, Some(LightState::Green));
    bridge.shutdown().await.unwrap();
}
