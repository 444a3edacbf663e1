#![no_main]

use libfuzzer_sys::fuzz_target;
use tailfield_core::io::{parse_metadata, write_metadata};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(meta) = parse_metadata(text) else {
        return;
    };
    let mut buf = Vec::new();
    write_metadata(&meta, &mut buf).unwrap();
    assert_eq!(parse_metadata(std::str::from_utf8(&buf).unwrap()).unwrap(), meta);
});
