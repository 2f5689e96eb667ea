//! Binary field snapshots.
//!
//! Layout (little endian):
//!
//! | bytes | content                          |
//! |-------|----------------------------------|
//! | 4     | magic `PHI4`                     |
//! | 4     | format version (u32)             |
//! | 4     | n (u32)                          |
//! | 8     | L (f64)                          |
//! | 4     | field count (u32)                |
//! | 8     | timestamp, seconds (u64)         |
//! | 8     | seed (u64)                       |
//! | 4     | CRC-32 of everything else        |
//!
//! followed by `count * n^3` f64 values, x-major with z fastest (the
//! [`GridSpec::index`] order).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField};

pub const MAGIC: &[u8; 4] = b"PHI4";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub n: u32,
    pub half_length: f64,
    pub count: u32,
    pub timestamp: u64,
    pub seed: u64,
}

pub fn encode(fields: &[RealField], seed: u64, timestamp: u64) -> Result<Vec<u8>> {
    let grid = match fields.first() {
        Some(f) => *f.grid(),
        None => return Err(Error::InsufficientData("snapshot needs at least one field".into())),
    };
    for f in fields {
        f.grid().check_same(&grid)?;
        if !f.is_finite() {
            return Err(Error::InvalidParameter("snapshot fields must be finite".into()));
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + fields.len() * grid.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.half_length().to_le_bytes());
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    out.extend_from_slice(&timestamp.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for f in fields {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = checksum(&out);
    out[40..44].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn checksum(bytes: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&bytes[..40]);
    h.update(&bytes[HEADER_LEN..]);
    h.finalize()
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<(SnapshotHeader, Vec<RealField>)> {
    if bytes.len() < 8 {
        return Err(Error::Checksum);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Version(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Version(format!("format version {version}, expected {VERSION}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checksum);
    }
    let header = SnapshotHeader {
        n: u32_at(bytes, 8),
        half_length: f64::from_bits(u64_at(bytes, 12)),
        count: u32_at(bytes, 20),
        timestamp: u64_at(bytes, 24),
        seed: u64_at(bytes, 32),
    };
    let n = header.n as usize;
    let expected = (header.count as usize)
        .checked_mul(n.pow(3))
        .and_then(|v| v.checked_mul(8))
        .ok_or(Error::Checksum)?;
    if bytes.len() != HEADER_LEN + expected || checksum(bytes) != u32_at(bytes, 40) {
        return Err(Error::Checksum);
    }
    let grid = GridSpec::new(n, header.half_length)?;
    let fields = bytes[HEADER_LEN..]
        .chunks_exact(8 * grid.len())
        .map(|chunk| {
            let values = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            RealField::from_values(grid, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, fields))
}

pub fn write(path: &Path, fields: &[RealField], seed: u64) -> Result<()> {
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::write(path, encode(fields, seed, ts)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(SnapshotHeader, Vec<RealField>)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::{rng_stream, sample_gff, ModelParams};

    fn fields() -> Vec<RealField> {
        let grid = GridSpec::new(8, 2.0).unwrap();
        let p = ModelParams::new(5.0, 0.0, 3.1, 1.0).unwrap();
        let mut rng = rng_stream(3, 0);
        vec![sample_gff(grid, &p, &mut rng), sample_gff(grid, &p, &mut rng)]
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.phi4");
        let fs = fields();
        write(&path, &fs, 42).unwrap();
        let (h, back) = read(&path).unwrap();
        assert_eq!((h.n, h.count, h.seed, h.half_length), (8, 2, 42, 2.0));
        for (a, b) in fs.iter().zip(&back) {
            let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same);
        }
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = encode(&fields(), 1, 0).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 8, HEADER_LEN, 20] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Checksum)), "cut {cut}");
        }
    }

    #[test]
    fn corrupted_payload_is_a_checksum_error() {
        let mut bytes = encode(&fields(), 1, 0).unwrap();
        bytes[HEADER_LEN + 17] ^= 1;
        assert!(matches!(decode(&bytes), Err(Error::Checksum)));
    }

    #[test]
    fn wrong_magic_or_version() {
        let mut bytes = encode(&fields(), 1, 0).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Version(_))));
        let mut bytes = encode(&fields(), 1, 0).unwrap();
        bytes[4] = 7;
        assert!(matches!(decode(&bytes), Err(Error::Version(_))));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&fields()[..1], 5, 77).unwrap();
        assert_eq!(&bytes[..4], b"PHI4");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 8);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2.0);
        assert_eq!(u64_at(&bytes, 24), 77);
        assert_eq!(bytes.len(), HEADER_LEN + 512 * 8);
    }
}
