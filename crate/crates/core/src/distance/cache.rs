//! `DMAT1` matrix cache files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"DMAT1" | rows: u32 | cols: u32 | rows*cols f64 (row-major)
//!          | trailer_len: u32 | trailer: UTF-8 JSON
//! ```
//!
//! The trailer carries the point lists, provider tag, creation time, a CRC32
//! of the float block, and an optional free-form `provenance` object.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{DistanceError, DistanceMatrix};
use crate::geo::GeoPoint;

pub const MAGIC: &[u8; 5] = b"DMAT1";
const HEADER_LEN: usize = MAGIC.len() + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheTrailer {
    pub sources: Vec<GeoPoint>,
    pub destinations: Vec<GeoPoint>,
    pub provider_tag: String,
    pub created_at: DateTime<Utc>,
    pub crc32: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub fn encode_matrix(m: &DistanceMatrix, provenance: Option<serde_json::Value>) -> Vec<u8> {
    let mut block = Vec::with_capacity(m.values().len() * 8);
    for v in m.values() {
        block.extend_from_slice(&v.to_le_bytes());
    }
    let trailer = CacheTrailer {
        sources: m.sources().to_vec(),
        destinations: m.destinations().to_vec(),
        provider_tag: m.provider_tag().to_string(),
        created_at: m.created_at(),
        crc32: crc32fast::hash(&block),
        provenance,
    };
    let json = serde_json::to_vec(&trailer).expect("trailer serializes");

    let mut out = Vec::with_capacity(HEADER_LEN + block.len() + 4 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&block);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, DistanceError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| DistanceError::Format("truncated file".into()))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(DistanceMatrix, CacheTrailer), DistanceError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(DistanceError::Format("bad magic".into()));
    }
    let rows = read_u32(bytes, MAGIC.len())? as usize;
    let cols = read_u32(bytes, MAGIC.len() + 4)? as usize;
    let block_len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| DistanceError::Format("dimensions overflow".into()))?;
    let block_end = HEADER_LEN
        .checked_add(block_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| DistanceError::Format("truncated file".into()))?;
    let block = &bytes[HEADER_LEN..block_end];
    let trailer_len = read_u32(bytes, block_end)? as usize;
    let trailer_start = block_end + 4;
    let trailer_bytes = bytes
        .get(trailer_start..trailer_start + trailer_len)
        .ok_or_else(|| DistanceError::Format("truncated file".into()))?;
    if trailer_start + trailer_len != bytes.len() {
        return Err(DistanceError::Format("trailing bytes after trailer".into()));
    }
    let trailer: CacheTrailer = serde_json::from_slice(trailer_bytes)
        .map_err(|e| DistanceError::Format(format!("bad trailer: {e}")))?;

    let computed = crc32fast::hash(block);
    if computed != trailer.crc32 {
        return Err(DistanceError::Checksum {
            stored: trailer.crc32,
            computed,
        });
    }
    if trailer.sources.len() != rows || trailer.destinations.len() != cols {
        return Err(DistanceError::Format(format!(
            "header says {rows}x{cols} but trailer lists {}x{} points",
            trailer.sources.len(),
            trailer.destinations.len()
        )));
    }
    let values = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = DistanceMatrix::with_timestamp(
        trailer.sources.clone(),
        trailer.destinations.clone(),
        values,
        trailer.provider_tag.clone(),
        trailer.created_at,
    )?;
    Ok((m, trailer))
}

pub fn save_matrix(
    m: &DistanceMatrix,
    path: &Path,
    provenance: Option<serde_json::Value>,
) -> Result<(), DistanceError> {
    fs::write(path, encode_matrix(m, provenance))?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DistanceMatrix, DistanceError> {
    Ok(decode_matrix(&fs::read(path)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn sample_3x4() -> DistanceMatrix {
        let src = vec![p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)];
        let dst = vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0), p(3.0, 3.0)];
        let values = (0..12).map(|i| i as f64 * 1.5 + 0.1).collect();
        DistanceMatrix::new(src, dst, values, "test").unwrap()
    }

    #[test]
    fn file_size_follows_layout() {
        let m = sample_3x4();
        let bytes = encode_matrix(&m, None);
        let trailer_len = u32::from_le_bytes(bytes[5 + 8 + 96..5 + 8 + 96 + 4].try_into().unwrap());
        assert_eq!(bytes.len(), 5 + 8 + 12 * 8 + 4 + trailer_len as usize);
        assert_eq!(&bytes[..5], b"DMAT1");
        assert_eq!(&bytes[5..9], &3u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &4u32.to_le_bytes());
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmat");
        let m = sample_3x4();
        save_matrix(&m, &path, Some(serde_json::json!({"seed": 7}))).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_matrix(&sample_3x4(), None);
        bytes[0] = b'X';
        assert!(matches!(decode_matrix(&bytes), Err(DistanceError::Format(ref s)) if s == "bad magic"));
    }

    #[test]
    fn truncated() {
        let bytes = encode_matrix(&sample_3x4(), None);
        for cut in [3, 10, 40, bytes.len() - 1] {
            assert!(matches!(decode_matrix(&bytes[..cut]), Err(DistanceError::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_value_fails_checksum() {
        let mut bytes = encode_matrix(&sample_3x4(), None);
        bytes[HEADER_LEN + 3] ^= 0x40;
        assert!(matches!(decode_matrix(&bytes), Err(DistanceError::Checksum { .. })));
    }

    #[test]
    fn huge_dimensions_do_not_allocate() {
        let mut bytes = b"DMAT1".to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_matrix(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let src: Vec<_> = (0..rows).map(|i| p(i as f64, 0.5)).collect();
            let dst: Vec<_> = (0..cols).map(|j| p(-(j as f64), 1.5)).collect();
            let values: Vec<f64> = (0..rows * cols).map(|_| rng.next_f64() * 1e7).collect();
            let m = DistanceMatrix::new(src, dst, values, "prop").unwrap();
            let (back, _) = decode_matrix(&encode_matrix(&m, None)).unwrap();
            prop_assert!(back.values().iter().zip(m.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, m);
        }
    }
}
