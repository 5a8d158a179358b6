#![no_main]

use libfuzzer_sys::fuzz_target;
use parity_herald::config::{parse_override, ConfigSource};

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = std::str::from_utf8(data) {
        if let Ok((k, v)) = parse_override(spec) {
            assert!(!k.is_empty() && !v.is_empty());
            let mut src = ConfigSource::parse("experiment = revival").unwrap();
            src.apply_override(spec).unwrap();
            assert_eq!(src.get(&k), Some(v.as_str()));
        }
    }
});
