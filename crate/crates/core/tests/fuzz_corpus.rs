//! Replays the checked-in fuzz seeds through the same entry points.

use std::fs;
use std::path::PathBuf;

use parity_herald::config::{parse_override, parse_qubit_state, ExperimentConfig};

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| fs::read(e.unwrap().path()).unwrap()).collect();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out.sort();
    out
}

#[test]
fn config_seeds_parse() {
    for seed in corpus("parse_config") {
        let text = String::from_utf8(seed).unwrap();
        let cfg = ExperimentConfig::parse(&text).unwrap();
        cfg.qubit_vector().unwrap();
    }
}

#[test]
fn override_seeds_do_not_panic() {
    let results: Vec<bool> = corpus("parse_override")
        .into_iter()
        .map(|s| parse_override(std::str::from_utf8(&s).unwrap()).is_ok())
        .collect();
    assert!(results.iter().any(|&ok| ok));
    assert!(results.iter().any(|&ok| !ok));
}

#[test]
fn qubit_state_seeds_normalize() {
    for seed in corpus("parse_qubit_state") {
        let n = 1 + seed[0] as usize % 4;
        if let Ok(v) = parse_qubit_state(std::str::from_utf8(&seed[1..]).unwrap(), n) {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
}
