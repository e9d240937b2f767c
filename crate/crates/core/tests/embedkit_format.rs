mod common;

use common::{corrupted_headers, pace_bytes, rng};
use pacmetric::embedkit::{load_embeddings, read_embeddings, save_embeddings, write_embeddings, HEADER_LEN};
use pacmetric::{EmbeddingMatrix, Error};
use proptest::prelude::*;
use rand::Rng;

fn f32_exact(rows: usize, dim: usize, vals: impl Fn(usize) -> f32) -> EmbeddingMatrix {
    let data = (0..rows * dim).map(|i| f64::from(vals(i))).collect();
    EmbeddingMatrix::new(rows, dim, data).unwrap()
}

fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_embeddings(m, &mut buf).unwrap();
    buf
}

#[test]
fn three_by_four_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pace");
    let m = f32_exact(3, 4, |i| i as f32 * 0.25 - 1.0);
    save_embeddings(&m, &path).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), (HEADER_LEN + 48) as u64);
}

#[test]
fn writer_matches_hand_built_bytes() {
    let m = f32_exact(2, 3, |i| [0.1f32, 0.2, 0.3, 0.4, 0.5, 0.6][i]);
    assert_eq!(encode(&m), pace_bytes(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
}

#[test]
fn edge_shapes() {
    let empty = EmbeddingMatrix::empty(512).unwrap();
    let back = read_embeddings(&encode(&empty)).unwrap();
    assert_eq!((back.rows(), back.dim()), (0, 512));

    let one = read_embeddings(&pace_bytes(1, 1, &[0.5])).unwrap();
    assert_eq!(one.as_slice(), &[0.5]);
}

#[test]
fn repeated_saves_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = f32_exact(5, 7, |i| (i as f32).sin());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_embeddings(&m, &a).unwrap();
    save_embeddings(&m, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn thousand_random_round_trips_are_bit_exact() {
    let mut r = rng(2024);
    for _ in 0..1000 {
        let rows = r.random_range(0..20);
        let dim = r.random_range(1..40);
        let bits: Vec<f32> = (0..rows * dim).map(|_| r.random_range(-1e6f32..1e6)).collect();
        let m = f32_exact(rows, dim, |i| bits[i]);
        let back = read_embeddings(&encode(&m)).unwrap();
        assert_eq!((back.rows(), back.dim()), (rows, dim));
        for (a, b) in back.as_slice().iter().zip(&bits) {
            assert_eq!((*a as f32).to_bits(), b.to_bits());
        }
    }
}

#[test]
fn every_corrupted_header_is_rejected() {
    for (label, bytes) in corrupted_headers() {
        match read_embeddings(&bytes) {
            Err(Error::Format { .. }) => {}
            other => panic!("{label}: expected a format error, got {other:?}"),
        }
    }
}

#[test]
fn non_finite_values_never_reach_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nan.pace");
    let bad = EmbeddingMatrix::new(1, 2, vec![0.0, 1e300]).unwrap();
    assert!(save_embeddings(&bad, &path).is_err());
    assert!(!path.exists());
    let mut sink = Vec::new();
    assert!(write_embeddings(&bad, &mut sink).is_err());
    assert!(sink.is_empty());
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_embeddings(dir.path().join("nope")), Err(Error::Io { .. })));
}

proptest! {
    #[test]
    fn any_f32_payload_round_trips(rows in 0usize..6, dim in 1usize..9, seed in any::<u64>()) {
        let mut r = rng(seed);
        let vals: Vec<f32> = (0..rows * dim)
            .map(|_| loop {
                let f = f32::from_bits(r.random());
                if f.is_finite() { break f; }
            })
            .collect();
        let bytes = pace_bytes(rows as u32, dim as u32, &vals);
        let m = read_embeddings(&bytes).unwrap();
        prop_assert_eq!(encode(&m), bytes);
    }

    #[test]
    fn single_byte_flips_in_magic_or_reserved_rejected(pos in prop_oneof![0usize..4, 17usize..32], flip in 1u8..=255) {
        let mut bytes = pace_bytes(1, 2, &[1.0, 2.0]);
        bytes[pos] ^= flip;
        prop_assert!(read_embeddings(&bytes).is_err());
    }
}
