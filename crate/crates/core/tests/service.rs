mod common;

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use advmimic::control::{imitation_error, robustness_sweep, EvalConfig, Registry, Runtime, SwitchConfig};
use advmimic::service::wire::{parse_client_message, ClientMessage, Envelope, EventKind, ServerMessage};
use advmimic::service::{
    bench, count_params, load_bundle, save_bundle, serve, Checkpoint, CheckpointMeta, ClientQueue, RunConfig,
    ServerOptions, ServiceError, Session, CHECKPOINT_VERSION,
};
use advmimic::nn::LayerSpec;
use common::client::*;
use common::{tiny_bundle, tiny_toml};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tungstenite::Message;

const BIN: &str = env!("CARGO_BIN_EXE_advmimic");

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

// ---- config ----

#[test]
fn shipped_configs_parse_with_table_defaults() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/configs");
    for f in ["stand.toml", "walk.toml", "desk-stand.toml", "desk-walk.toml"] {
        let cfg = RunConfig::load(root.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert_eq!(cfg.ppo.reward_discount_factor, 0.95);
        assert_eq!(cfg.discriminator.gradient_penalty_coefficient, 10.0);
    }
    let full = RunConfig::load(root.join("stand.toml")).unwrap();
    assert_eq!(full.train_config(), {
        let mut t = advmimic::rl::TrainConfig::default();
        t.checkpoint_every = 25;
        t
    });
}

#[test]
fn unknown_key_is_reported_by_name() {
    let text = tiny_toml("x", "stand").replace("ppo_batch_size = 32", "ppo_batch_sise = 32");
    let err = RunConfig::from_toml_str(&text, "bad.toml", ".").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("ppo_batch_sise") && msg.contains("bad.toml"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn invalid_value_is_reported_by_name() {
    let text = tiny_toml("x", "stand").replace("[ppo]", "[ppo]\nreward_discount_factor = 1.5");
    let msg = RunConfig::from_toml_str(&text, "bad.toml", ".").unwrap_err().to_string();
    assert!(msg.contains("reward_discount_factor"), "{msg}");
}

#[test]
fn clip_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("clips")).unwrap();
    let clip = &common::clips("stand")[0];
    clip.save(dir.path().join("clips/stand.json")).unwrap();
    let text = tiny_toml("x", "stand").replace("template = \"stand\"", "path = \"clips/stand.json\"");
    let cfg_path = write(dir.path(), "run.toml", &text);
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let loaded = cfg.load_clips(&cfg.load_model().unwrap()).unwrap();
    assert_eq!(loaded[0].to_json(), clip.to_json());

    let missing = write(dir.path(), "missing.toml", &text.replace("clips/stand.json", "clips/nope.json"));
    let cfg = RunConfig::load(&missing).unwrap();
    let err = cfg.load_clips(&cfg.load_model().unwrap()).unwrap_err();
    assert!(matches!(err, ServiceError::MissingFile(ref p) if p.ends_with("clips/nope.json")), "{err}");
    assert_eq!(err.exit_code(), 2);
}

// ---- checkpoint ----

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (bundle, _) = tiny_bundle("walk", 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let meta = CheckpointMeta { iteration: 7, samples: 99, config_source: Some("name = \"walk\"".into()) };
    save_bundle(&bundle, &path, meta.clone()).unwrap();
    let back = load_bundle(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let s: Vec<f64> = (0..bundle.actor.normalizer.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..bundle.ensemble.window_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        assert_eq!(bundle.act(&s).unwrap(), back.act(&s).unwrap());
        assert_eq!(bundle.actor.values(&[s.as_slice()]).unwrap(), back.actor.values(&[s.as_slice()]).unwrap());
        assert_eq!(bundle.ensemble.scores(&w).unwrap(), back.ensemble.scores(&w).unwrap());
    }
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.meta, meta);
    assert_eq!(ck.to_json(), Checkpoint::from_bundle(&back, meta).to_json());
}

#[test]
fn checkpoint_version_mismatch_is_a_hard_error() {
    let (bundle, _) = tiny_bundle("stand", 0);
    let json = Checkpoint::from_bundle(&bundle, CheckpointMeta::default()).to_json();
    let bumped = json.replacen(
        &format!("\"version\":{CHECKPOINT_VERSION}"),
        &format!("\"version\":{}", CHECKPOINT_VERSION + 1),
        1,
    );
    assert_ne!(json, bumped);
    let err = Checkpoint::from_json(&bumped).unwrap_err();
    assert!(matches!(err, ServiceError::Version { found, .. } if found == CHECKPOINT_VERSION as u64 + 1));
    assert!(Checkpoint::from_json("{\"format\":\"other\",\"version\":1}").is_err());
    assert!(Checkpoint::from_json("not json").is_err());
}

// ---- bench ----

#[test]
fn parameter_count_matches_the_closed_form() {
    // default policy trunk: GRU 256 then 1024, 512 and the output layer
    let (i, h, a) = (45usize, 256usize, 10usize);
    let expected = 3 * i * h + 3 * h * h + 3 * h + (h * 1024 + 1024) + (1024 * 512 + 512) + (512 * a + a);
    let specs = [
        LayerSpec::Gru(h),
        LayerSpec::Dense(1024),
        LayerSpec::Relu,
        LayerSpec::Dense(512),
        LayerSpec::Relu,
        LayerSpec::Dense(a),
    ];
    assert_eq!(count_params(i, &specs), expected);

    let (bundle, _) = tiny_bundle("stand", 0);
    let r = bench(&bundle, 1000, 0).unwrap();
    let p = &bundle.actor.policy;
    assert_eq!(r.policy_params, count_params(p.input_dim(), p.specs()));
    let d = bundle.ensemble.net();
    assert_eq!(r.ensemble_params, count_params(d.input_dim(), d.specs()));
    assert_eq!(r.policy_latency.trials, 1000);
    assert_eq!(r.ensemble_latency.trials, 1000);
    assert!(r.policy_latency.std_ms >= 0.0 && r.policy_bytes > 0);
    assert!(bench(&bundle, 0, 0).is_err());
}

// ---- wire ----

#[test]
fn client_messages_parse() {
    assert_eq!(
        parse_client_message(r#"{"type":"request_switch","target":"walk"}"#).unwrap(),
        ClientMessage::RequestSwitch { target: "walk".into() }
    );
    assert_eq!(
        parse_client_message(r#"{"type":"perturb","impulse":[10,0]}"#).unwrap(),
        ClientMessage::Perturb { impulse: [10.0, 0.0], link: None }
    );
    for t in ["pause", "resume", "reset"] {
        parse_client_message(&format!(r#"{{"type":"{t}"}}"#)).unwrap();
    }
    for bad in [
        r#"{"type":"teleport"}"#,
        r#"{"type":"request_switch"}"#,
        r#"{"type":"request_switch","target":"walk","extra":1}"#,
        r#"{"type":"perturb","impulse":[1e9,0]}"#,
        r#"{"type":"perturb","impulse":[1]}"#,
        r#"{"target":"walk"}"#,
        "[]",
        "",
    ] {
        assert!(parse_client_message(bad).is_err(), "{bad}");
    }
}

#[test]
fn server_messages_round_trip() {
    let m = Envelope { seq: 4, body: ServerMessage::event(3, EventKind::Fell) };
    let text = serde_json::to_string(&m).unwrap();
    assert!(text.contains("\"type\":\"event\"") && text.contains("\"kind\":\"fell\""), "{text}");
    assert_eq!(serde_json::from_str::<Envelope>(&text).unwrap(), m);
}

fn session() -> Session {
    let mut reg = Registry::new();
    for t in ["stand", "walk"] {
        let (b, c) = tiny_bundle(t, 0);
        reg.insert(b, c).unwrap();
    }
    Session::new(Runtime::from_clip(reg, SwitchConfig::default(), "stand", 0.0).unwrap())
}

#[test]
fn unknown_policy_reply_names_valid_targets() {
    let mut s = session();
    let replies = s.handle_text(r#"{"type":"request_switch","target":"run"}"#);
    match &replies[..] {
        [ServerMessage::Error { message, valid }] => {
            assert!(message.contains("run"));
            assert_eq!(valid, &vec!["stand".to_string(), "walk".to_string()]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn session_commands_take_effect() {
    let mut s = session();
    s.handle_text(r#"{"type":"pause"}"#);
    let f0 = s.frame();
    s.tick();
    assert_eq!(s.frame(), f0);
    s.handle_text(r#"{"type":"resume"}"#);
    s.tick();
    assert_eq!(s.frame(), f0 + 1);
    assert!(s.handle_text(r#"{"type":"perturb","impulse":[5,0]}"#).iter().all(|m| !matches!(m, ServerMessage::Error { .. })));
    s.tick();
    s.handle_text(r#"{"type":"reset"}"#);
    assert_eq!(s.frame(), 0);
    match s.frame_message() {
        ServerMessage::Frame { scores, links, .. } => {
            assert_eq!(scores.len(), 2);
            assert_eq!(links.len(), s.runtime().simulator().model().num_links());
        }
        other => panic!("{other:?}"),
    }
}

/// Random mutations of valid messages plus random bytes.

#[test]
fn ten_thousand_fuzzed_messages_never_break_the_session() {
    let mut s = session();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut errors = 0;
    for i in 0..10_000 {
        let text = fuzz_message(&mut rng);
        for r in s.handle_text(&text) {
            if matches!(r, ServerMessage::Error { .. }) {
                errors += 1;
            }
            serde_json::to_string(&r).unwrap();
        }
        if i % 50 == 0 {
            s.tick();
        }
    }
    assert!(errors > 1000, "fuzzer produced too few invalid messages ({errors})");
    s.tick();
}

#[test]
fn queue_drops_oldest_and_marks_the_gap() {
    let q = ClientQueue::new(8);
    let mut seq = 0;
    for t in 0..100 {
        q.push(ServerMessage::event(t, EventKind::Fell));
    }
    let out = q.drain(&mut seq, 100);
    assert_eq!(out.len(), 9);
    assert!(matches!(out[0].body, ServerMessage::Event { kind: EventKind::Gap, count: Some(92), .. }));
    assert!(matches!(out[1].body, ServerMessage::Event { t: 92, .. }));
    q.push(ServerMessage::event(0, EventKind::Fell));
    let more = q.drain(&mut seq, 101);
    let seqs: Vec<u64> = out.iter().chain(&more).map(|e| e.seq).collect();
    assert_eq!(seqs, (0..10).collect::<Vec<_>>());
}

// ---- server ----

fn options(hz: f64, queue: usize) -> ServerOptions {
    ServerOptions { addr: "127.0.0.1:0".into(), hz, queue, max_frames: None }
}

#[test]
fn server_streams_frames_and_answers_commands() {
    let mut handle = serve(session(), options(30.0, 64)).unwrap();
    // no clients: the loop still advances
    std::thread::sleep(Duration::from_millis(200));
    assert!(handle.frames() >= 3, "{}", handle.frames());

    let mut driver = connect(handle.addr());
    let first = recv(&mut driver);
    assert_eq!(first.seq, 0);
    assert!(matches!(first.body, ServerMessage::Hello { driver: true, ref policies, .. } if policies.len() == 2));
    let mut observer = connect(handle.addr());
    assert!(matches!(recv(&mut observer).body, ServerMessage::Hello { driver: false, .. }));

    driver.send(Message::text(r#"{"type":"request_switch","target":"run"}"#)).unwrap();
    let seen = recv_until(&mut driver, |m| matches!(m, ServerMessage::Error { .. }));
    assert!(matches!(&seen.last().unwrap().body, ServerMessage::Error { valid, .. } if valid.len() == 2));
    driver.send(Message::text("{\"type\":")).unwrap();
    recv_until(&mut driver, |m| matches!(m, ServerMessage::Error { .. }));
    observer.send(Message::text(r#"{"type":"pause"}"#)).unwrap();
    recv_until(&mut observer, |m| matches!(m, ServerMessage::Error { message, .. } if message.contains("driving")));

    // connection survives errors; a valid command goes through
    driver.send(Message::text(r#"{"type":"request_switch","target":"walk"}"#)).unwrap();
    recv_until(&mut driver, |m| matches!(m, ServerMessage::Event { kind: EventKind::Requested, .. }));
    let frames = recv_until(&mut driver, |m| matches!(m, ServerMessage::Frame { .. }));
    for w in frames.windows(2) {
        assert_eq!(w[1].seq, w[0].seq + 1);
    }
    handle.stop();
}

#[test]
fn fuzzed_socket_traffic_keeps_the_server_up() {
    let mut handle = serve(session(), options(30.0, 4096)).unwrap();
    let mut ws = connect(handle.addr());
    recv(&mut ws);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        ws.send(Message::text(fuzz_message(&mut rng))).unwrap();
    }
    ws.send(Message::binary(vec![0u8, 159, 146, 150])).unwrap();
    ws.send(Message::text("x".repeat(10_000))).unwrap();
    ws.send(Message::text(r#"{"type":"pause"}"#)).unwrap();
    recv_until(&mut ws, |m| matches!(m, ServerMessage::Event { kind: EventKind::Paused, .. }));
    assert!(handle.is_running());
    handle.stop();
}

#[test]
fn slow_consumer_sees_contiguous_sequence_numbers_and_a_gap_marker() {
    let mut handle = serve(session(), options(2000.0, 4)).unwrap();
    let mut ws = connect(handle.addr());
    let mut seqs = vec![recv(&mut ws).seq];
    let start = handle.frames();
    // stop reading until the socket buffers are long full
    while handle.frames() < start + 6000 {
        std::thread::sleep(Duration::from_millis(50));
    }
    let mut gaps = 0;
    for _ in 0..20_000 {
        let e = recv(&mut ws);
        seqs.push(e.seq);
        if let ServerMessage::Event { kind: EventKind::Gap, count, .. } = e.body {
            assert!(count.unwrap() > 0);
            gaps += 1;
            if gaps > 2 {
                break;
            }
        }
    }
    assert!(gaps > 0, "no messages were dropped");
    for w in seqs.windows(2) {
        assert_eq!(w[1], w[0] + 1);
    }
    handle.stop();
}

// ---- CLI ----

fn cli(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(BIN).args(args).env("ADVMIMIC_OUT", out).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn missing_clip_file_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = tiny_toml("x", "stand").replace("template = \"stand\"", "path = \"gone.json\"");
    let cfg = write(dir.path(), "run.toml", &text);
    let out = cli(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone.json"));

    let out = cli(&["train", "--config", dir.path().join("none.toml").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["train"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["bench"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_is_reproducible_and_drivers_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &tiny_toml("tiny", "stand"));
    let run = |out: &str, seed: &str| {
        let o = cli(
            &["train", "--config", cfg.to_str().unwrap(), "--seed", seed, "--workers", "1", "--budget", "192", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(Path::new(out).join("metrics.jsonl")).unwrap()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let la = run(a.to_str().unwrap(), "4");
    assert_eq!(la.lines().count(), 3);
    assert_eq!(la, run(b.to_str().unwrap(), "4"));
    assert_ne!(la, run(c.to_str().unwrap(), "5"));
    assert!(a.join("checkpoint-000001.json").exists());
    let ck = a.join("tiny.json");
    let loaded = Checkpoint::load(&ck).unwrap();
    assert_eq!(loaded.meta.config_source.as_deref(), Some(tiny_toml("tiny", "stand").as_str()));
    assert_eq!(std::fs::read_to_string(a.join("config.toml")).unwrap(), tiny_toml("tiny", "stand"));

    let bundle = loaded.into_bundle().unwrap();
    let clips = common::clips("stand");
    let cfg = EvalConfig { trials: 3, seed: 2, threads: 1, init_noise: 0.0, frames: Some(30) };

    let o = cli(&["eval", "--checkpoint", ck.to_str().unwrap(), "--trials", "3", "--seed", "2", "--frames", "30"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: advmimic::control::ImitationReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report, imitation_error(&bundle, &clips, &cfg).unwrap());
    assert!(dir.path().join("eval-tiny.json").exists());

    let o = cli(&["eval", "--checkpoint", ck.to_str().unwrap(), "--playback", "--trials", "3", "--frames", "30"], dir.path());
    let report: advmimic::control::ImitationReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report.mean, 0.0);

    let o = cli(&["robustness", "--checkpoint", ck.to_str().unwrap(), "--magnitudes", ""], dir.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "[]");
    let o = cli(
        &["robustness", "--checkpoint", ck.to_str().unwrap(), "--magnitudes", "0,40", "--trials", "2", "--seed", "1"],
        dir.path(),
    );
    let rows: Vec<advmimic::control::RobustnessRow> = serde_json::from_slice(&o.stdout).unwrap();
    let cfg = EvalConfig { trials: 2, seed: 1, ..EvalConfig::default() };
    assert_eq!(rows, robustness_sweep(&bundle, &clips, &[0.0, 40.0], &cfg).unwrap());

    let o = cli(&["bench", "--checkpoint", ck.to_str().unwrap(), "--trials", "50"], dir.path());
    assert!(o.status.success());
}
