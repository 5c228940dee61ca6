//! File helpers shared by every artifact format: TSV reading, JSON manifests,
//! little-endian float32 blocks and content hashes.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Yields `(1-based line number, fields)` for every non-blank line.
///
/// Only the line terminator is stripped; fields keep their whitespace so the
/// caller decides what to trim.
pub fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.split('\n').enumerate().filter_map(|(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Encodes values as little-endian IEEE-754 float32.
pub fn encode_f32(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    )
}

pub fn write_f32_block(path: &Path, values: &[f64]) -> Result<()> {
    write_bytes(path, &encode_f32(values))
}

pub fn read_f32_block(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_f32(&bytes)
        .ok_or_else(|| Error::Invalid(format!("{}: length is not a multiple of 4", path.display())))?;
    if values.len() != expected_len {
        return Err(Error::Invalid(format!(
            "{}: expected {expected_len} floats, found {}",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

/// Pairwise (cascade) summation; the reduction order depends only on length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_block_round_trip_is_exact_for_f32_values() {
        let vals = vec![0.0, -1.5, 3.25, 1e-7f32 as f64, f32::MAX as f64];
        assert_eq!(decode_f32(&encode_f32(&vals)).unwrap(), vals);
        assert!(decode_f32(&[0, 1, 2]).is_none());
    }

    #[test]
    fn tsv_rows_skip_blank_lines_and_keep_numbers() {
        let rows: Vec<_> = tsv_rows("a\tb\r\n\n  \nc\td\n").collect();
        assert_eq!(rows, vec![(1, vec!["a", "b"]), (4, vec!["c", "d"])]);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
