use std::process::Command;

use teamlearn::xapps::Mode;
use teamlearn_cli::{parse_config_str, ConfigError};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_teamlearn"));
    c.env_remove("TEAMLEARN_OUT");
    c
}

#[test]
fn empty_config_is_table1() {
    let s = parse_config_str("", &[]).unwrap();
    assert_eq!(s.sim.n_bs, 4);
    assert_eq!(s.sim.n_users, 30);
    assert_eq!(s.sim.n_rbg, 12);
    assert_eq!(s.sim.p_max_dbm, 38.0);
    assert_eq!(s.sim.p_min_dbm, 1.0);
    assert_eq!(s.sim.bandwidth_total, 20e6);
    assert_eq!(s.sim.slot_duration, 0.1);
    assert_eq!(s.n_slots, 20_000);
    assert_eq!(s.train.epsilon_decay_slots, 10_000);
}

#[test]
fn overrides_and_presets() {
    let s = parse_config_str("", &["traffic.mean_rate=6e6".into()]).unwrap();
    assert_eq!(s.traffic.mean_rate, 6e6);

    let doc = "preset = \"desk\"\nn_slots = 300\nmode = \"idl\"\n[traffic]\nmean_rate = 3000000\n";
    let s = parse_config_str(doc, &["mobility.speed=0".into()]).unwrap();
    assert_eq!((s.sim.n_bs, s.sim.n_users, s.sim.n_rbg), (2, 10, 6));
    assert_eq!(s.mode, Mode::Idl);
    assert_eq!(s.traffic.mean_rate, 3e6);
    assert_eq!(s.mobility.speed, 0.0);
    assert_eq!(s.train.epsilon_decay_slots, 150);

    let s = parse_config_str("[train]\nepsilon_decay_slots = 7\ntarget_sync = 50\n", &[]).unwrap();
    assert_eq!(s.train.epsilon_decay_slots, 7);
    assert_eq!(s.train.target_sync, Some(50));
}

#[test]
fn bad_configs_name_their_key() {
    let err = parse_config_str("[sim]\np_min_dbm = 40.0\n", &[]).unwrap_err();
    assert!(err.to_string().contains("sim.p_min_dbm"), "{err}");

    let err = parse_config_str("[sim]\nbogus = 1\n", &[]).unwrap_err();
    assert!(
        matches!(&err, ConfigError::UnknownKey(k) if k == "sim.bogus"),
        "{err}"
    );

    let err = parse_config_str("", &["train.secret=1".into()]).unwrap_err();
    assert!(err.to_string().contains("train.secret"), "{err}");

    let err = parse_config_str("[traffic]\nmean_rate = \"fast\"\n", &[]).unwrap_err();
    assert!(err.to_string().contains("traffic.mean_rate"), "{err}");

    assert!(parse_config_str("preset = \"huge\"\n", &[]).is_err());
    assert!(parse_config_str("n_slots = 0\n", &[]).is_err());
}

#[test]
fn run_writes_artifacts_and_replays_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let status = bin()
        .args([
            "run",
            "--set",
            "preset=desk",
            "--slots",
            "40",
            "--seed",
            "9",
            "--trace",
            "--out",
        ])
        .arg(&first)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for f in ["run.csv", "summary.csv", "manifest.toml", "trace.jsonl"] {
        assert!(first.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(first.join("run.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "slot,throughput_bps,reward,cumulative_pdr"
    );
    assert_eq!(csv.lines().count(), 41);

    let second = dir.path().join("b");
    let status = bin()
        .arg("run")
        .arg("--config")
        .arg(first.join("manifest.toml"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for f in ["run.csv", "summary.csv", "manifest.toml"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .env("TEAMLEARN_OUT", dir.path())
        .args(["run", "--set", "preset=desk", "--slots", "3"])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(dir.path().join("run.csv").exists());
}

#[test]
fn verification_subcommands() {
    let out = bin()
        .args(["gradcheck", "--networks", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative gradient error"));

    let out = bin()
        .args(["oracle", "--instances", "50"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!bin().arg("bogus").output().unwrap().status.success());
    assert!(!bin().output().unwrap().status.success());
    let out = bin()
        .args([
            "run",
            "--set",
            "sim.p_min_dbm=40",
            "--out",
            "/nonexistent-never",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.p_min_dbm"));
}
