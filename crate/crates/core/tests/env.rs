use twinsim_core::env::{AgentSpec, DoneReason, EnvConfig, IntersectionEnv, Scenario};
use twinsim_core::scene::Pose2;

fn no_jitter() -> EnvConfig {
    EnvConfig {
        spawn_jitter: 0.0,
        ..EnvConfig::default()
    }
}

#[test]
fn head_on_agents_see_mirror_images() {
    let mut env = IntersectionEnv::new(no_jitter()).unwrap();
    let obs = env.reset(Scenario::HeadOn, 0).unwrap();
    let check = |obs: &[twinsim_core::env::AgentObservation]| {
        let (a, b) = (&obs[0], &obs[1]);
        // Mirror through y = 0 flips body-frame y and relative yaw.
        assert_eq!(a.goal[0], b.goal[0]);
        assert_eq!(a.goal[1], -b.goal[1]);
        assert_eq!(a.peers[0].position[0], b.peers[0].position[0]);
        assert_eq!(a.peers[0].position[1], -b.peers[0].position[1]);
        assert_eq!(a.peers[0].yaw.abs(), b.peers[0].yaw.abs());
        assert_eq!(a.peers[0].velocity, b.peers[0].velocity);
    };
    check(&obs);
    let mut last = None;
    for _ in 0..400 {
        let r = env.step(&[0, 0]).unwrap();
        check(&r.observations);
        let done = r.episode_done;
        last = Some(r);
        if done {
            break;
        }
    }
    let r = last.unwrap();
    assert!(r.episode_done);
    // Straight at each other in one lane: both collide, with equal penalties.
    for a in &r.agents {
        assert_eq!(a.done_reason, Some(DoneReason::Collision));
    }
    assert_eq!(r.agents[0].reward, r.agents[1].reward);
    assert!(r.agents[0].reward < 0.0);
}

#[test]
fn fixed_actions_are_deterministic() {
    let run = || {
        let mut env = IntersectionEnv::new(EnvConfig::default()).unwrap();
        env.reset(Scenario::Multi, 21).unwrap();
        let mut trace = Vec::new();
        for k in 0..150 {
            let a = [(k % 3) as i8 - 1, 0, 1, -1];
            match env.step(&a) {
                Ok(r) => trace.push(serde_json::to_string(&r).unwrap()),
                Err(_) => break,
            }
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn finished_agent_actions_are_ignored_with_a_warning() {
    let mut env = IntersectionEnv::new(no_jitter()).unwrap();
    // A1 faces a wall a few centimetres away; A2 has open road.
    env.reset_custom(
        vec![
            AgentSpec {
                id: "A1".into(),
                pose: Pose2::new(0.15, -1.2, -std::f64::consts::FRAC_PI_2),
                goal: [0.15, 1.2],
            },
            AgentSpec {
                id: "A2".into(),
                pose: Pose2::new(-0.15, 1.2, -std::f64::consts::FRAC_PI_2),
                goal: [-0.15, -1.2],
            },
        ],
        0,
    )
    .unwrap();
    let mut saw_collision = false;
    for _ in 0..200 {
        let r = env.step(&[1, 0]).unwrap();
        if r.agents[0].done {
            if saw_collision {
                assert_eq!(r.agents[0].reward, 0.0);
                assert!(!r.warnings.is_empty());
                return;
            }
            assert_eq!(r.agents[0].done_reason, Some(DoneReason::Collision));
            saw_collision = true;
        }
    }
    panic!("A1 never reached the wall");
}

#[test]
fn timeout_ends_the_episode_without_reward() {
    let cfg = EnvConfig {
        timeout_steps: 3,
        ..no_jitter()
    };
    let mut env = IntersectionEnv::new(cfg).unwrap();
    env.reset(Scenario::Single, 0).unwrap();
    env.step(&[0]).unwrap();
    env.step(&[0]).unwrap();
    let r = env.step(&[0]).unwrap();
    assert!(r.episode_done);
    assert_eq!(r.agents[0].done_reason, Some(DoneReason::Timeout));
    assert_eq!(r.agents[0].reward, 0.0);
    assert!(env.step(&[0]).is_err());
}
