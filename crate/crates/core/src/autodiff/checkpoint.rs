//! Checkpoint blob format.
//!
//! A checkpoint is a directory holding `params.blob` plus `manifest.txt`.
//! Each blob record is: u32 LE name length, UTF-8 name, u32 LE rank,
//! rank × u32 LE dims, then the row-major little-endian f32 payload.
//! The manifest lists tensor names in record order. Round-trips are
//! bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{MraError, Result};

use super::tensor::Tensor;

pub const BLOB_FILE: &str = "params.blob";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn write_checkpoint(dir: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut manifest = String::new();
    for (name, t) in tensors {
        blob.extend_from_slice(&(name.len() as u32).to_le_bytes());
        blob.extend_from_slice(name.as_bytes());
        blob.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            blob.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        manifest.push_str(name);
        manifest.push('\n');
    }
    fs::write(dir.join(BLOB_FILE), blob)?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let blob = fs::read(dir.join(BLOB_FILE))?;
    let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut cursor = &blob[..];
    let mut out = Vec::new();

    fn read_u32(cur: &mut &[u8]) -> Result<u32> {
        let mut b = [0u8; 4];
        cur.read_exact(&mut b).map_err(|_| MraError::Parse("truncated checkpoint blob".into()))?;
        Ok(u32::from_le_bytes(b))
    }

    while !cursor.is_empty() {
        let name_len = read_u32(&mut cursor)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        cursor
            .read_exact(&mut name_bytes)
            .map_err(|_| MraError::Parse("truncated checkpoint blob".into()))?;
        let name = String::from_utf8(name_bytes).map_err(|_| MraError::Parse("non-UTF-8 tensor name".into()))?;
        let rank = read_u32(&mut cursor)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut cursor)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 4];
            cursor
                .read_exact(&mut b)
                .map_err(|_| MraError::Parse("truncated checkpoint payload".into()))?;
            data.push(f32::from_le_bytes(b));
        }
        out.push((name, Tensor::new(shape, data)));
    }

    let listed: Vec<&str> = manifest.lines().collect();
    if listed.len() != out.len() || listed.iter().zip(&out).any(|(m, (n, _))| *m != n) {
        return Err(MraError::Parse("manifest does not match blob record order".into()));
    }
    Ok(out)
}

/// Write a small JSON sidecar next to the blob (architecture metadata).
pub fn write_sidecar<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(name))?;
    let s = serde_json::to_string_pretty(value).map_err(|e| MraError::Parse(e.to_string()))?;
    f.write_all(s.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_sidecar<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let s = fs::read_to_string(dir.join(name))?;
    serde_json::from_str(&s).map_err(|e| MraError::Parse(format!("{name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let tensors = vec![
            ("policy/0/w1".to_string(), Tensor::new(vec![2, 3], vec![0.1, -2.5, 3.25e-8, 1.0, f32::MIN_POSITIVE, -0.0])),
            ("latent/0/psi".to_string(), Tensor::new(vec![4], vec![1.5, 2.5, -3.5, 4.5])),
        ];
        write_checkpoint(dir.path(), &tensors).unwrap();
        let back = read_checkpoint(dir.path()).unwrap();
        assert_eq!(back.len(), tensors.len());
        for ((n0, t0), (n1, t1)) in tensors.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            for (a, b) in t0.data().iter().zip(t1.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn manifest_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let tensors = vec![("a".to_string(), Tensor::scalar(1.0))];
        write_checkpoint(dir.path(), &tensors).unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "b\n").unwrap();
        assert!(read_checkpoint(dir.path()).is_err());
    }
}
