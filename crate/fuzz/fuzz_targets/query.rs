#![no_main]

use libfuzzer_sys::fuzz_target;
use tailfield_core::io::parse_query;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = parse_query(text) {
        assert_eq!(spec.t_indices.len(), spec.x.len());
        assert!(spec.with_k(10.0).is_ok());
    }
});
