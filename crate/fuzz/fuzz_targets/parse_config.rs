#![no_main]

use libfuzzer_sys::fuzz_target;
use parity_herald::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            assert_eq!(cfg.config_hash.len(), 64);
            let _ = cfg.qubit_vector();
        }
    }
});
