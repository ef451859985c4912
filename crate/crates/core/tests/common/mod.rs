//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `key = value` lines of a fixture, comments stripped.
pub fn read_spreadsheet(name: &str) -> Vec<(String, u64)> {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture");
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key = value");
            (k.trim().to_string(), v.trim().parse().expect("integer"))
        })
        .collect()
}

/// Walks a serialized checkpoint without the library reader and returns
/// `(tensor name, element count)` pairs.
pub fn checkpoint_walk(bytes: &[u8]) -> Vec<(String, u64)> {
    let mut pos = 0usize;
    let mut take = |n: usize| {
        let s = &bytes[pos..pos + n];
        pos += n;
        s
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
    assert_eq!(take(4), b"MWPT");
    assert_eq!(u32_at(take(4)), 1);
    take(6 * 4 + 1);
    let count = u32_at(take(4));
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u32_at(take(4)) as usize;
        let name = String::from_utf8(take(len).to_vec()).unwrap();
        let rank = u32_at(take(4));
        let mut numel = 1u64;
        for _ in 0..rank {
            let e = take(8);
            numel *= u64::from_le_bytes(e.try_into().unwrap());
        }
        take(numel as usize * 8);
        out.push((name, numel));
    }
    assert_eq!(pos, bytes.len(), "trailing bytes");
    out
}

pub fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}
