use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_twinsim");

fn twinsim(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("TWINSIM_SEED")
        .output()
        .expect("spawn twinsim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn headless(scene: &str, seed: &str, record: &Path) -> Output {
    twinsim(&[
        "run",
        "--scene",
        scene,
        "--headless",
        "--duration",
        "60",
        "--seed",
        seed,
        "--bind",
        "127.0.0.1:0",
        "--record",
        record.to_str().unwrap(),
    ])
}

#[test]
fn missing_scene_names_the_path() {
    let out = twinsim(&["run", "--scene", "no/such/scene.toml", "--headless", "--duration", "1"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("no/such/scene.toml"), "{}", stderr(&out));
}

#[test]
fn malformed_scene_is_a_scene_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[bounds]\nmin = [1, 1]\nmax = [0, 0]\n").unwrap();
    let out = twinsim(&["run", "--scene", path.to_str().unwrap(), "--headless", "--duration", "1"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn usage_and_config_errors_have_their_own_codes() {
    assert_eq!(code(&twinsim(&["run", "--no-such-flag"])), 2);
    assert_eq!(code(&twinsim(&["run", "--headless"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scene = \"tiny_town\"\nsead = 3\n").unwrap();
    let out = twinsim(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("sead"), "{}", stderr(&out));

    let out = twinsim(&["run", "--scene", "tiny_town", "--vehicles", "9", "--headless", "--duration", "1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn headless_run_records_at_the_sensor_rate_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let out = headless("parking_school", "7", &a);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("ticks 6000"), "{}", stdout(&out));
    assert!(stdout(&out).contains("dropped 0"));
    // 60 s at 7 Hz, one vehicle.
    assert!(stdout(&out).contains("420 rows"), "{}", stdout(&out));
    let rows = std::fs::read_to_string(&a)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count();
    assert_eq!(rows, 420 + 1, "header plus one row per frame");

    assert_eq!(code(&headless("parking_school", "7", &b)), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let out = twinsim(&["replay", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("rows 420  differing 0  max deviation 0e0"), "{}", stdout(&out));
}

#[test]
fn replay_flags_edits_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    assert_eq!(code(&headless("tiny_town", "1", &good)), 0);
    let text = std::fs::read_to_string(&good).unwrap();

    let edited = dir.path().join("edited.csv");
    let changed = text.replacen("vehicle=V1 throttle=0 ", "vehicle=V1 throttle=0.5 ", 1);
    assert_ne!(changed, text);
    std::fs::write(&edited, changed).unwrap();
    let out = twinsim(&["replay", edited.to_str().unwrap()]);
    assert_eq!(code(&out), 6, "{}", stdout(&out));
    assert!(stderr(&out).contains("replay diverged at row"), "{}", stderr(&out));
    assert!(!stdout(&out).contains("max deviation 0e0"));

    let truncated = dir.path().join("truncated.csv");
    let head: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    std::fs::write(&truncated, head).unwrap();
    let out = twinsim(&["replay", truncated.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn seed_comes_from_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scene = \"tiny_town\"\nseed = 3\nheadless = true\nduration = 1.0\nbind = \"127.0.0.1:0\"\n")
        .unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>| {
        let rec = dir.path().join("r.csv");
        let mut cmd = Command::new(BIN);
        cmd.args(["run", "--config", cfg.to_str().unwrap(), "--record", rec.to_str().unwrap()]);
        cmd.env_remove("TWINSIM_SEED");
        if let Some(e) = env {
            cmd.env("TWINSIM_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = std::fs::read_to_string(&rec).unwrap();
        let meta = text.lines().nth(1).unwrap();
        let v: serde_json::Value = serde_json::from_str(meta.strip_prefix("#meta ").unwrap()).unwrap();
        v["world"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(None, None), 3);
    assert_eq!(seed_of(Some("5"), None), 5);
    assert_eq!(seed_of(Some("5"), Some("9")), 9);
}

#[test]
fn env_rollouts_are_reproducible() {
    let args = ["env", "--scenario", "multi", "--episodes", "2", "--policy", "random", "--seed", "4"];
    let a = twinsim(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&twinsim(&args)));
    assert!(stdout(&a).contains("episode 1:"));
    assert_eq!(code(&twinsim(&["env", "--scenario", "roundabout"])), 2);
}

/// Kills the process when dropped so a failing test leaves nothing behind.
struct Service {
    child: Child,
    url: String,
}

impl Service {
    fn spawn(args: &[&str], banner: &str) -> Service {
        let mut child = Command::new(BIN)
            .args(args)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn service");
        let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
        let url = loop {
            let line = lines.next().expect("service exited early").unwrap();
            if let Some(url) = line.strip_prefix(banner) {
                break url.trim().to_string();
            }
        };
        // Keep draining so the child never blocks on a full pipe.
        std::thread::spawn(move || for _ in lines {});
        Service { child, url }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn client_commands_drive_a_live_bridge() {
    let bridge = Service::spawn(
        &["run", "--scene", "intersection_school", "--vehicles", "2", "--lockstep", "--bind", "127.0.0.1:0"],
        "bridge listening on",
    );
    let scm = Service::spawn(
        &["scm", "--bridge", &bridge.url, "--bind", "127.0.0.1:0"],
        "scm listening on",
    );
    let b = ["--bridge", bridge.url.as_str()];
    let s = ["--scm", scm.url.as_str()];

    let out = twinsim(&[&["record", "start"][..], &b].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("\"code\":\"OK\""), "{}", stdout(&out));

    // The SCM may still be attaching; retry briefly.
    let mut out = twinsim(&[&["light", "L1", "red"][..], &s].concat());
    for _ in 0..50 {
        if code(&out) == 0 {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(100));
        out = twinsim(&[&["light", "L1", "red"][..], &s].concat());
    }
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("\"state\":\"red\""), "{}", stdout(&out));

    let out = twinsim(&[&["light", "L9", "red"][..], &s].concat());
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("L9"), "{}", stderr(&out));

    let out = twinsim(&[&["mode", "V2", "manual"][..], &s].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("manual"), "{}", stdout(&out));

    assert_eq!(code(&twinsim(&[&["reset"][..], &b].concat())), 0);
    assert_eq!(code(&twinsim(&[&["record", "stop"][..], &b].concat())), 0);

    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("live.csv");
    let out = twinsim(&[&["record", "export", "--out", rec.to_str().unwrap()][..], &b].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&rec).unwrap();
    assert!(text.contains("#elem tick=0 element=L1 state=red"), "{text:.400}");
    assert_eq!(code(&twinsim(&["replay", rec.to_str().unwrap()])), 0);

    drop(scm);
    drop(bridge);
    let out = twinsim(&["reset", "--bridge", "ws://127.0.0.1:9/ws"]);
    assert_eq!(code(&out), 5);
}
