use twinsim_core::protocol::{
    AckPayload, CmdPayload, ElementWrite, Envelope, Hello, MsgType, RecordAction, RecordPayload, Role, Subscriptions,
};
use twinsim_core::recorder::{replay, RecordDocument};
use twinsim_core::scene::fixture_source;
use twinsim_core::session::{ClientId, Session, SessionConfig};
use twinsim_core::world::WorldConfig;
use twinsim_core::CoreError;

fn hello(role: Role, vehicle: Option<&str>) -> Envelope {
    let mut e = Envelope::new(
        MsgType::Hello,
        &Hello {
            role,
            subscribe: Subscriptions::default(),
            protocol: None,
        },
    );
    e.vehicle_id = vehicle.map(str::to_string);
    e
}

fn ok(s: &mut Session, c: ClientId, e: &Envelope) -> AckPayload {
    let out = s.handle(c, e);
    assert_eq!(out.replies[0].kind, MsgType::Ack, "{:?}", out.replies[0]);
    out.replies[0].payload_as().unwrap()
}

fn record(action: RecordAction) -> Envelope {
    Envelope::new(MsgType::Record, &RecordPayload { action })
}

/// Drives two vehicles with a light change and a mid-run reset, then exports.
fn recorded_run(seed: u64) -> String {
    let world = WorldConfig {
        seed,
        ..WorldConfig::default()
    };
    let cfg = SessionConfig::from_scene_source(fixture_source("tiny_town").unwrap().into(), world, 2).unwrap();
    let mut s = Session::new(cfg).unwrap();
    let (ui, _) = s.connect(&hello(Role::Ui, None)).unwrap();
    let (v1, _) = s.connect(&hello(Role::VehicleController, Some("V1"))).unwrap();
    let (v2, _) = s.connect(&hello(Role::VehicleController, Some("V2"))).unwrap();
    for _ in 0..25 {
        s.advance().unwrap();
    }
    ok(&mut s, ui, &record(RecordAction::Start));
    let mut seq = 0;
    for k in 0..600u32 {
        if k % 40 == 0 {
            seq += 1;
            let steer = ((k / 40) as f64 * 0.37).sin();
            let c1 = Envelope::new(MsgType::Cmd, &CmdPayload { throttle: 0.7, steering: steer }).seq(seq);
            let c2 = Envelope::new(MsgType::Cmd, &CmdPayload { throttle: 0.4, steering: -steer }).seq(seq);
            ok(&mut s, v1, &c1);
            ok(&mut s, v2, &c2);
        }
        if k == 150 {
            let w = ElementWrite {
                element: "L1".into(),
                state: "green".into(),
            };
            ok(&mut s, ui, &Envelope::new(MsgType::ScmEvent, &w));
        }
        if k == 300 {
            ok(&mut s, ui, &Envelope::new(MsgType::Reset, &serde_json::json!({})));
        }
        s.advance().unwrap();
    }
    ok(&mut s, ui, &record(RecordAction::Stop));
    let ack = ok(&mut s, ui, &record(RecordAction::Export));
    ack.data["csv"].as_str().unwrap().to_string()
}

#[test]
fn fresh_record_replays_exactly() {
    let csv = recorded_run(9);
    let doc = RecordDocument::parse(&csv).unwrap();
    assert_eq!(doc.segments.len(), 2);
    let report = replay(&doc).unwrap();
    assert!(report.rows_compared > 50, "{report:?}");
    assert!(report.is_exact(), "{report:?}");
    assert_eq!(report.rows_differing, 0);
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(recorded_run(3), recorded_run(3));
    assert_ne!(recorded_run(3), recorded_run(4));
}

#[test]
fn edited_command_is_detected() {
    let csv = recorded_run(9);
    let needle = "throttle=0.7 ";
    let at = csv.find(needle).expect("a logged command");
    let edited = format!("{}throttle=0.69 {}", &csv[..at], &csv[at + needle.len()..]);
    let report = replay(&RecordDocument::parse(&edited).unwrap()).unwrap();
    assert!(report.max_deviation > 0.0, "{report:?}");
    assert!(report.first_divergence.is_some());
}

#[test]
fn truncated_record_is_a_parse_error() {
    let csv = recorded_run(9);
    let cut = &csv[..csv.len() - 40];
    match RecordDocument::parse(cut) {
        Err(CoreError::RecordParse { line, .. }) => assert_eq!(line, cut.lines().count()),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn rows_are_ordered_by_time_then_vehicle() {
    let doc = RecordDocument::parse(&recorded_run(1)).unwrap();
    for seg in &doc.segments {
        for w in seg.rows.windows(2) {
            assert!((w[0].tick, &w[0].vehicle_id) < (w[1].tick, &w[1].vehicle_id));
        }
    }
}
