#![no_main]

use libfuzzer_sys::fuzz_target;
use tailfield_core::io::{read_sample_csv, write_sample_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(sample) = read_sample_csv(data) else {
        return;
    };
    // anything accepted must survive a write/read round trip unchanged
    let mut buf = Vec::new();
    write_sample_csv(&sample, &mut buf).unwrap();
    let back = read_sample_csv(buf.as_slice()).unwrap();
    assert_eq!(back.values(), sample.values());
    assert_eq!(back.grid(), sample.grid());
    if let Ok(ranks) = tailfield_core::compute_ranks(&sample) {
        assert_eq!(ranks.n(), sample.n());
    }
});
