use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tmsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tmsim"));
    c.env_remove("TMSIM_OUT_DIR");
    c
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// The bundled RL-SP-DRR proactive scenario cut down to a few seconds.
fn short_spec(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(scenarios().join("proactive-rl_sp_drr.toml")).unwrap();
    let text = text
        .replace("duration_s = 270.0", "duration_s = 6.0")
        .replace("hp_window_s = [90.0, 180.0]", "hp_window_s = [2.0, 4.0]")
        .replace("occupancy_window_s = [80.0, 100.0]", "occupancy_window_s = [0.0, 6.0]");
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_bundled_scenarios() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let out = tmsim().arg("validate").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), stderr(&out));
        assert!(stdout(&out).ends_with(": ok\n"));
    }
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(short_spec(dir.path()))
        .unwrap()
        .replace("hp_share = 0.6", "hp_share = 1.5")
        .replace("hp_window_s = [2.0, 4.0]", "hp_window_s = [2.0, 40.0]");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, text).unwrap();
    let out = tmsim().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("hp_share"), "{err}");
    assert!(err.contains("hp_window_s"), "{err}");
}

#[test]
fn malformed_spec_fails_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.toml");
    fs::write(&bad, "name = \"x\"\nseed = [\n").unwrap();
    let out = tmsim().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("broken.toml"), "{}", stderr(&out));

    let out = tmsim().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn cmdcount_examples() {
    let count = |mode: &str| {
        let out = tmsim()
            .args(["cmdcount", "--switches", "2", "--procs", "3", "--prio", "1", "--mode", mode])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out).trim().parse::<u64>().unwrap()
    };
    assert_eq!(count("STRICT_FULL"), 6);
    assert_eq!(count("STRICT_PROACTIVE_ADJUST"), 4);
    assert_eq!(count("RL_SP_DRR"), 2);
    assert_eq!(count("rl-sp-drr"), 2);

    let out = tmsim()
        .args(["cmdcount", "--switches", "2", "--procs", "3", "--prio", "4", "--mode", "RL_SP_DRR"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = tmsim()
        .args(["cmdcount", "--switches", "2", "--procs", "3", "--prio", "1", "--mode", "FIFO"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

fn run_into(spec: &Path, out_dir: &Path, seed: Option<u64>) -> serde_json::Value {
    let mut cmd = tmsim();
    cmd.arg("run").arg(spec).env("TMSIM_OUT_DIR", out_dir);
    if let Some(s) = seed {
        cmd.args(["--seed", &s.to_string()]);
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["throughput.csv", "latency.csv", "occupancy.csv", "drops.csv", "manifest.json"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_outputs_and_manifest_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let spec = short_spec(dir.path());
    let first = run_into(&spec, &dir.path().join("a"), None);
    assert_eq!(first["seed"], 1);
    let s = &first["summary"];
    assert_eq!(
        s["injected"].as_u64().unwrap(),
        s["delivered"].as_u64().unwrap() + s["dropped"].as_u64().unwrap() + s["resident"].as_u64().unwrap()
    );
    let header = fs::read_to_string(dir.path().join("a/throughput.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains(','));

    // the manifest alone is enough to rerun the scenario
    let replay = run_into(&dir.path().join("a/manifest.json"), &dir.path().join("b"), None);
    assert_eq!(first["files"], replay["files"]);
    assert_eq!(first["spec_sha256"], replay["spec_sha256"]);

    let reseeded = run_into(&spec, &dir.path().join("c"), Some(7));
    assert_eq!(reseeded["seed"], 7);
    assert_ne!(first["files"][0]["sha256"], reseeded["files"][0]["sha256"]);
}

#[test]
fn out_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = short_spec(dir.path());
    let out = tmsim()
        .arg("run")
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("flag"))
        .env("TMSIM_OUT_DIR", dir.path().join("env"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("flag/manifest.json").is_file());
    assert!(!dir.path().join("env").exists());
}
