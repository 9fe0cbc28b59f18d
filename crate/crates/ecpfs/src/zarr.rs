//! Minimal Zarr v2 directory-store primitives.
//!
//! Only what the index layout needs: uncompressed C-order little-endian
//! arrays written as a single chunk, groups, and JSON attributes. The
//! resulting directories are readable by any Zarr v2 implementation.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZGROUP: &str = ".zgroup";
pub const ZARRAY: &str = ".zarray";
pub const ZATTRS: &str = ".zattrs";

/// Element types used by the index layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F16,
    F32,
    U64,
}

impl Dtype {
    pub fn descriptor(&self) -> &'static str {
        match self {
            Dtype::F16 => "<f2",
            Dtype::F32 => "<f4",
            Dtype::U64 => "<u8",
        }
    }

    pub fn item_bytes(&self) -> usize {
        match self {
            Dtype::F16 => 2,
            Dtype::F32 => 4,
            Dtype::U64 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<f2" => Some(Dtype::F16),
            "<f4" => Some(Dtype::F32),
            "<u8" => Some(Dtype::U64),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ZarrayMeta {
    zarr_format: u32,
    shape: Vec<u64>,
    chunks: Vec<u64>,
    dtype: String,
    compressor: Option<serde_json::Value>,
    fill_value: serde_json::Value,
    order: String,
    filters: Option<serde_json::Value>,
}

/// Shape and dtype of an array as read from its `.zarray` descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayMeta {
    pub shape: Vec<u64>,
    pub dtype: Dtype,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptArray {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Create a directory marked as a Zarr v2 group.
pub fn write_group(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(ZGROUP), "{\"zarr_format\":2}")?;
    Ok(())
}

pub fn is_group(dir: &Path) -> bool {
    dir.join(ZGROUP).is_file()
}

pub fn is_array(dir: &Path) -> bool {
    dir.join(ZARRAY).is_file()
}

/// Write JSON attributes for a group or array.
pub fn write_attrs(dir: &Path, attrs: &serde_json::Value) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(attrs)?;
    buf.push(b'\n');
    fs::write(dir.join(ZATTRS), buf)?;
    Ok(())
}

pub fn read_attrs(dir: &Path) -> Result<serde_json::Value> {
    let path = dir.join(ZATTRS);
    let data = fs::read(&path).map_err(|e| corrupt(&path, format!("cannot read: {e}")))?;
    serde_json::from_slice(&data).map_err(|e| corrupt(&path, format!("invalid JSON: {e}")))
}

/// Single chunk covering the whole array; zero-size dims get chunk extent 1.
fn chunks_for(shape: &[u64]) -> Vec<u64> {
    shape.iter().map(|&s| s.max(1)).collect()
}

fn chunk_key(ndim: usize) -> String {
    vec!["0"; ndim].join(".")
}

/// Write an array as one uncompressed C-order chunk.
///
/// Replaces any group placeholder at `dir`. Arrays with a zero-length first
/// dimension are written with metadata only (no chunk file).
pub fn write_array(dir: &Path, shape: &[u64], dtype: Dtype, data: &[u8]) -> Result<()> {
    let n_elems: u64 = shape.iter().product();
    let expected = n_elems as usize * dtype.item_bytes();
    if data.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "array data is {} bytes, shape {:?} of {} needs {}",
            data.len(),
            shape,
            dtype.descriptor(),
            expected
        )));
    }
    fs::create_dir_all(dir)?;
    // a directory can be a group or an array, not both
    let placeholder = dir.join(ZGROUP);
    if placeholder.is_file() {
        fs::remove_file(&placeholder)?;
    }
    let meta = ZarrayMeta {
        zarr_format: 2,
        shape: shape.to_vec(),
        chunks: chunks_for(shape),
        dtype: dtype.descriptor().to_string(),
        compressor: None,
        fill_value: match dtype {
            Dtype::U64 => serde_json::json!(0),
            _ => serde_json::json!(0.0),
        },
        order: "C".to_string(),
        filters: None,
    };
    let mut buf = serde_json::to_vec_pretty(&meta)?;
    buf.push(b'\n');
    fs::write(dir.join(ZARRAY), buf)?;
    let chunk = dir.join(chunk_key(shape.len()));
    if n_elems > 0 {
        let mut f = fs::File::create(&chunk)?;
        f.write_all(data)?;
    } else if chunk.exists() {
        // overwriting a non-empty array with an empty one
        fs::remove_file(&chunk)?;
    }
    Ok(())
}

/// Read an array's `.zarray` descriptor without touching chunk data.
pub fn read_meta(dir: &Path) -> Result<ArrayMeta> {
    let path = dir.join(ZARRAY);
    let data = match fs::read(&path) {
        Ok(d) => d,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(corrupt(&path, "missing .zarray descriptor"))
        }
        Err(e) => return Err(e.into()),
    };
    let meta: ZarrayMeta =
        serde_json::from_slice(&data).map_err(|e| corrupt(&path, format!("invalid JSON: {e}")))?;
    if meta.zarr_format != 2 {
        return Err(corrupt(&path, format!("zarr_format {}", meta.zarr_format)));
    }
    if meta.order != "C" {
        return Err(corrupt(&path, format!("unsupported order {:?}", meta.order)));
    }
    if meta.compressor.is_some() {
        return Err(corrupt(&path, "compressed arrays are not supported"));
    }
    let dtype = Dtype::parse(&meta.dtype)
        .ok_or_else(|| corrupt(&path, format!("unsupported dtype {:?}", meta.dtype)))?;
    Ok(ArrayMeta {
        shape: meta.shape,
        dtype,
    })
}

/// Read the raw chunk bytes of an array written by [`write_array`].
pub fn read_array(dir: &Path) -> Result<(ArrayMeta, Vec<u8>)> {
    let meta = read_meta(dir)?;
    let n_elems: u64 = meta.shape.iter().product();
    let expected = n_elems as usize * meta.dtype.item_bytes();
    if n_elems == 0 {
        return Ok((meta, Vec::new()));
    }
    let chunk = dir.join(chunk_key(meta.shape.len()));
    let mut f = match fs::File::open(&chunk) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(corrupt(&chunk, "missing chunk file"))
        }
        Err(e) => return Err(e.into()),
    };
    let mut data = Vec::with_capacity(expected);
    f.read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(corrupt(
            &chunk,
            format!("chunk is {} bytes, expected {}", data.len(), expected),
        ));
    }
    Ok((meta, data))
}

pub fn encode_f32(values: &[f32], dtype: Dtype) -> Result<Vec<u8>> {
    match dtype {
        Dtype::F32 => {
            let mut out = Vec::with_capacity(values.len() * 4);
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            Ok(out)
        }
        Dtype::F16 => {
            let mut out = Vec::with_capacity(values.len() * 2);
            for v in values {
                out.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
            }
            Ok(out)
        }
        Dtype::U64 => Err(Error::InvalidArgument(
            "cannot encode floats as u64".into(),
        )),
    }
}

/// Decode stored bytes to f32, widening f16 where needed.
pub fn decode_f32(data: &[u8], dtype: Dtype, path: &Path) -> Result<Vec<f32>> {
    match dtype {
        Dtype::F32 => Ok(data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()),
        Dtype::F16 => Ok(data
            .chunks_exact(2)
            .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect()),
        Dtype::U64 => Err(corrupt(path, "expected a float array, found <u8")),
    }
}

pub fn encode_u64(values: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_u64(data: &[u8], path: &Path) -> Result<Vec<u64>> {
    if data.len() % 8 != 0 {
        return Err(corrupt(path, "u64 array length not a multiple of 8"));
    }
    Ok(data
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
        .collect())
}

/// Convenience: write a `[rows x dim]` f32 matrix in the given storage dtype.
pub fn write_matrix(dir: &Path, rows: u64, dim: u64, dtype: Dtype, values: &[f32]) -> Result<()> {
    write_array(dir, &[rows, dim], dtype, &encode_f32(values, dtype)?)
}

/// Convenience: read a matrix back as f32 with its row count.
pub fn read_matrix(dir: &Path) -> Result<(u64, u64, Vec<f32>)> {
    let (meta, data) = read_array(dir)?;
    if meta.shape.len() != 2 {
        return Err(corrupt(dir, format!("expected 2-d array, got {:?}", meta.shape)));
    }
    let values = decode_f32(&data, meta.dtype, dir)?;
    Ok((meta.shape[0], meta.shape[1], values))
}

pub fn write_u64_vector(dir: &Path, values: &[u64]) -> Result<()> {
    write_array(dir, &[values.len() as u64], Dtype::U64, &encode_u64(values))
}

pub fn read_u64_vector(dir: &Path) -> Result<Vec<u64>> {
    let (meta, data) = read_array(dir)?;
    if meta.shape.len() != 1 {
        return Err(corrupt(dir, format!("expected 1-d array, got {:?}", meta.shape)));
    }
    decode_u64(&data, dir)
}

/// Exists so callers can distinguish "node absent" from "corrupt node".
pub fn array_exists(dir: &Path) -> bool {
    dir.join(ZARRAY).is_file()
}

pub fn group_path(base: &Path, parts: &[&str]) -> PathBuf {
    let mut p = base.to_path_buf();
    for part in parts {
        p.push(part);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn f32_matrix_round_trip() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("m");
        let vals = vec![1.0f32, -2.5, 3.25, 0.0, 1e-3, 42.0];
        write_matrix(&dir, 2, 3, Dtype::F32, &vals).unwrap();
        let (r, c, got) = read_matrix(&dir).unwrap();
        assert_eq!((r, c), (2, 3));
        assert_eq!(got, vals);
    }

    #[test]
    fn f16_quantization_bounded() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("m");
        let vals = vec![0.1234f32, -7.77, 1000.5, 0.0];
        write_matrix(&dir, 4, 1, Dtype::F16, &vals).unwrap();
        let (_, _, got) = read_matrix(&dir).unwrap();
        for (a, b) in vals.iter().zip(&got) {
            let rel = (a - b).abs() / a.abs().max(1e-12);
            assert!(rel <= 2f32.powi(-10), "{a} vs {b}");
        }
    }

    #[test]
    fn empty_array_round_trip() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("e");
        write_matrix(&dir, 0, 4, Dtype::F32, &[]).unwrap();
        let (r, c, got) = read_matrix(&dir).unwrap();
        assert_eq!((r, c), (0, 4));
        assert!(got.is_empty());
        assert!(!dir.join("0.0").exists());
    }

    #[test]
    fn u64_round_trip() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("ids");
        let vals = vec![0u64, 7, u64::MAX];
        write_u64_vector(&dir, &vals).unwrap();
        assert_eq!(read_u64_vector(&dir).unwrap(), vals);
    }

    #[test]
    fn truncated_chunk_is_corrupt() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("t");
        write_u64_vector(&dir, &[1, 2, 3]).unwrap();
        let chunk = dir.join("0");
        let data = std::fs::read(&chunk).unwrap();
        std::fs::write(&chunk, &data[..data.len() - 4]).unwrap();
        assert!(matches!(
            read_u64_vector(&dir),
            Err(Error::CorruptArray { .. })
        ));
    }

    #[test]
    fn array_replaces_group_placeholder() {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path().join("g");
        write_group(&dir).unwrap();
        assert!(is_group(&dir));
        write_u64_vector(&dir, &[1]).unwrap();
        assert!(!is_group(&dir));
        assert!(is_array(&dir));
    }
}
