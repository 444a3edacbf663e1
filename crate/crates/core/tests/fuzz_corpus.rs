//! Replays the checked-in fuzz corpus through the same checks as the fuzz
//! targets, so the seeds stay meaningful on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use tailfield_core::io::{
    parse_metadata, parse_query, read_sample_csv, write_metadata, write_sample_csv,
};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus for {target}");
    files
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn sample_csv_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("sample_csv") {
        let Ok(sample) = read_sample_csv(data.as_slice()) else {
            continue;
        };
        accepted += 1;
        let mut buf = Vec::new();
        write_sample_csv(&sample, &mut buf).unwrap();
        let back = read_sample_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), sample.values(), "{name}");
        assert_eq!(back.grid(), sample.grid(), "{name}");
    }
    assert!(accepted >= 3);
}

#[test]
fn metadata_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("metadata_json") {
        let Ok(text) = std::str::from_utf8(&data) else {
            continue;
        };
        let Ok(meta) = parse_metadata(text) else {
            continue;
        };
        accepted += 1;
        let mut buf = Vec::new();
        write_metadata(&meta, &mut buf).unwrap();
        assert_eq!(
            parse_metadata(std::str::from_utf8(&buf).unwrap()).unwrap(),
            meta,
            "{name}"
        );
    }
    assert_eq!(accepted, 2);
}

#[test]
fn query_seeds() {
    let mut accepted = 0;
    for (name, data) in corpus("query") {
        let Ok(spec) = parse_query(std::str::from_utf8(&data).unwrap()) else {
            continue;
        };
        accepted += 1;
        assert_eq!(spec.t_indices.len(), spec.x.len(), "{name}");
        assert!(spec.with_k(10.0).is_ok(), "{name}");
    }
    assert_eq!(accepted, 4);
}
