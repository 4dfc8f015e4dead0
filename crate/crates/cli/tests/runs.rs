use std::process::Command;

fn rovella(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rovella")).args(args).output().unwrap()
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "[noise]\nseed = 5\neps = 0.02\n[orbit]\nn = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = rovella(&["simulate-orbit", "--config", cfg.to_str().unwrap(), "--seed", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 6);
    let config = manifest["config"].as_str().unwrap();
    assert!(config.contains("eps = 0.02"));
    let csv = std::fs::read_to_string(out.join("orbit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn bad_chain_exits_two_and_names_it() {
    let o = rovella(&["simulate-orbit", "--c", "0.5", "--c-prime", "0.4", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("c < c_prime"));
}

#[test]
fn eps_above_family_bound_exits_two() {
    let o = rovella(&["hyperbolic-tails", "--eps", "0.3", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_detects_a_tampered_artifact_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    assert!(rovella(&["simulate-orbit", "--n", "30", "--out", out.to_str().unwrap()]).status.success());
    let path = out.join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    m["artifacts"][0]["sha256"] = "00".into();
    std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    let replay_out = dir.path().join("b");
    let o = rovella(&["replay", "--manifest", path.to_str().unwrap(), "--check", "--out", replay_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orbit.csv differs"));
}
