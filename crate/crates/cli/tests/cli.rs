use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parity-sim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn body(csv: &str) -> String {
    csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn kick_is_reproducible_and_stamped() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(sim(&["kick"], a.path()).status.success());
    assert!(sim(&["kick"], b.path()).status.success());
    let x = fs::read_to_string(a.path().join("kick.csv")).unwrap();
    let y = fs::read_to_string(b.path().join("kick.csv")).unwrap();
    assert_eq!(x, y);
    assert!(x.contains("config_sha256"));
    assert!(fs::read_to_string(a.path().join("kick_revivals.csv")).unwrap().lines().count() > 2);
}

#[test]
fn forced_jump_at_zero_gives_no_kick() {
    let d = tempfile::tempdir().unwrap();
    let o = sim(&["kick", "--override", "forced_jump=0 us"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("kick_revivals.csv")).unwrap();
    for v in column(&csv, "xx") {
        assert!((v - 1.0).abs() < 1e-6, "xx = {v}");
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |w: &'static str| {
        vec!["bias", "--workers", w, "--override", "trajectories=300", "--override", "swap_divisors=1, 8"]
    };
    assert!(sim(&args("1"), a.path()).status.success());
    assert!(sim(&args("3"), b.path()).status.success());
    let x = fs::read_to_string(a.path().join("bias.csv")).unwrap();
    let y = fs::read_to_string(b.path().join("bias.csv")).unwrap();
    assert_eq!(body(&x), body(&y));
}

#[test]
fn zero_efficiency_misses_everything() {
    let d = tempfile::tempdir().unwrap();
    let o = sim(&["bias", "--override", "eta=0", "--override", "trajectories=100", "--override", "swap_divisors=1, 4"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("bias.csv")).unwrap();
    assert!(column(&csv, "missed_bright").iter().all(|&m| m == 1.0));
    assert!(column(&csv, "missed_dark").iter().all(|&m| m == 1.0));
}

#[test]
fn zero_shift_gives_flat_correlators() {
    let d = tempfile::tempdir().unwrap();
    let o = sim(&["revival", "--override", "chi=0 rad/us", "--override", "t_end=1 us"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("revival.csv")).unwrap();
    let xx = column(&csv, "xx");
    let first = xx[0];
    assert!(xx.iter().all(|v| (v - first).abs() < 1e-9));
}

#[test]
fn bad_input_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = sim(&["kick", "--override", "colour=blue"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));

    let cfg = d.path().join("other.conf");
    fs::write(&cfg, "experiment = revival\nchi = 1 rad/us\n").unwrap();
    let o = sim(&["kick", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(2));

    fs::write(&cfg, "experiment = kick\nchi = 1\n").unwrap();
    let o = sim(&["kick", "--config", cfg.to_str().unwrap()], d.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn validate_exit_code_follows_report() {
    let d = tempfile::tempdir().unwrap();
    let o = sim(
        &["validate", "--override", "trajectories=100", "--override", "kappa_j=10 rad/us", "--override", "chi=0.01 rad/us"],
        d.path(),
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("validate.json")).unwrap()).unwrap();
    let all = json["checks"].as_array().unwrap().iter().all(|c| c["passed"].as_bool().unwrap());
    assert_eq!(o.status.success(), all);
    assert_eq!(o.status.code(), Some(if all { 0 } else { 1 }));
    let notes = json["regime_notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("out of regime")));
}
