#![no_main]

use libfuzzer_sys::fuzz_target;
use parity_herald::config::parse_qubit_state;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let n_qubits = 1 + (n as usize % 4);
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(v) = parse_qubit_state(text, n_qubits) {
            assert_eq!(v.len(), 1 << n_qubits);
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
});
