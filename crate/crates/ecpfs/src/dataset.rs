//! Vector file ingestion. Rows are exposed as f32 regardless of the file's
//! element type, and access is positional so a dataset never has to fit in
//! memory.
//!
//! Supported formats:
//! - `fbin`: `u32 n`, `u32 d`, then `n * d` f32 little-endian.
//! - `fvecs`: per row `u32 d` followed by `d` f32 little-endian.
//! - `raw_f16`: bare `n * d` f16 little-endian, with a `<file>.json` sidecar
//!   `{"n": ..., "d": ...}`.

use std::fs::File;
use std::io::Read;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use half::f16;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Fbin,
    Fvecs,
    RawF16,
}

impl VectorFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fbin" => Ok(VectorFormat::Fbin),
            "fvecs" => Ok(VectorFormat::Fvecs),
            "raw_f16" | "raw-f16" => Ok(VectorFormat::RawF16),
            other => Err(Error::Dataset(format!("unknown vector format {other:?}"))),
        }
    }

    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fbin" => Some(VectorFormat::Fbin),
            "fvecs" => Some(VectorFormat::Fvecs),
            _ => None,
        }
    }
}

#[derive(Debug)]
enum Source {
    File {
        file: File,
        format: VectorFormat,
    },
    Memory(Vec<f32>),
}

/// A validated collection of fixed-dimension vectors.
#[derive(Debug)]
pub struct Dataset {
    source: Source,
    n: u64,
    dim: usize,
}

#[derive(Deserialize)]
struct RawSidecar {
    n: u64,
    d: usize,
}

impl Dataset {
    /// Open and validate a vector file. For fvecs every per-row dimension
    /// header is checked; for the fixed-stride formats the file size is.
    pub fn open(path: impl AsRef<Path>, format: VectorFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
        let file_len = file.metadata()?.len();
        match format {
            VectorFormat::Fbin => {
                let mut header = [0u8; 8];
                read_at(&file, 0, &mut header, path)?;
                let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as u64;
                let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
                if dim == 0 {
                    return Err(Error::Dataset(format!(
                        "{}: fbin header declares dim 0",
                        path.display()
                    )));
                }
                let expected = 8 + n * dim as u64 * 4;
                if file_len != expected {
                    return Err(Error::Dataset(format!(
                        "{}: fbin declares {n} x {dim} vectors ({expected} bytes) but file is {file_len} bytes",
                        path.display()
                    )));
                }
                Ok(Dataset {
                    source: Source::File {
                        file,
                        format,
                    },
                    n,
                    dim,
                })
            }
            VectorFormat::Fvecs => {
                let (n, dim) = scan_fvecs(&file, file_len, path)?;
                Ok(Dataset {
                    source: Source::File {
                        file,
                        format,
                    },
                    n,
                    dim,
                })
            }
            VectorFormat::RawF16 => {
                let sidecar_path = sidecar_for(path);
                let sidecar: RawSidecar = serde_json::from_slice(
                    &std::fs::read(&sidecar_path).map_err(|e| {
                        Error::Dataset(format!(
                            "missing raw_f16 sidecar {}: {e}",
                            sidecar_path.display()
                        ))
                    })?,
                )
                .map_err(|e| {
                    Error::Dataset(format!("invalid sidecar {}: {e}", sidecar_path.display()))
                })?;
                if sidecar.d == 0 {
                    return Err(Error::Dataset("sidecar declares dim 0".into()));
                }
                let expected = sidecar.n * sidecar.d as u64 * 2;
                if file_len != expected {
                    return Err(Error::Dataset(format!(
                        "{}: sidecar declares {} x {} f16 ({expected} bytes) but file is {file_len} bytes",
                        path.display(),
                        sidecar.n,
                        sidecar.d
                    )));
                }
                Ok(Dataset {
                    source: Source::File {
                        file,
                        format,
                    },
                    n: sidecar.n,
                    dim: sidecar.d,
                })
            }
        }
    }

    /// Wrap an in-memory row-major buffer.
    pub fn from_vecs(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Dataset(format!(
                "buffer of {} values is not a whole number of dim-{dim} rows",
                data.len()
            )));
        }
        let n = (data.len() / dim) as u64;
        Ok(Dataset {
            source: Source::Memory(data),
            n,
            dim,
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: u64) -> Result<Vec<f32>> {
        self.read_rows(i, 1)
    }

    /// Read `count` consecutive rows starting at `start`, flattened row-major.
    pub fn read_rows(&self, start: u64, count: u64) -> Result<Vec<f32>> {
        if start + count > self.n {
            return Err(Error::Dataset(format!(
                "row range {start}..{} out of bounds for {} rows",
                start + count,
                self.n
            )));
        }
        let dim = self.dim;
        match &self.source {
            Source::Memory(data) => {
                let a = start as usize * dim;
                let b = (start + count) as usize * dim;
                Ok(data[a..b].to_vec())
            }
            Source::File { file, format } => match format {
                VectorFormat::Fbin => {
                    let mut buf = vec![0u8; count as usize * dim * 4];
                    read_at(file, 8 + start * dim as u64 * 4, &mut buf, Path::new("fbin"))?;
                    Ok(buf
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect())
                }
                VectorFormat::Fvecs => {
                    let stride = 4 + dim * 4;
                    let mut buf = vec![0u8; count as usize * stride];
                    read_at(file, start * stride as u64, &mut buf, Path::new("fvecs"))?;
                    let mut out = Vec::with_capacity(count as usize * dim);
                    for row in buf.chunks_exact(stride) {
                        out.extend(
                            row[4..]
                                .chunks_exact(4)
                                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
                        );
                    }
                    Ok(out)
                }
                VectorFormat::RawF16 => {
                    let mut buf = vec![0u8; count as usize * dim * 2];
                    read_at(file, start * dim as u64 * 2, &mut buf, Path::new("raw_f16"))?;
                    Ok(buf
                        .chunks_exact(2)
                        .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
                        .collect())
                }
            },
        }
    }

    /// Visit all rows in order, in batches of at most `batch_rows`.
    pub fn for_each_batch(
        &self,
        batch_rows: u64,
        mut f: impl FnMut(u64, &[f32]) -> Result<()>,
    ) -> Result<()> {
        let batch_rows = batch_rows.max(1);
        let mut start = 0;
        while start < self.n {
            let count = batch_rows.min(self.n - start);
            let rows = self.read_rows(start, count)?;
            f(start, &rows)?;
            start += count;
        }
        Ok(())
    }
}

/// Sidecar path for raw_f16 files: the data path with `.json` appended.
pub fn sidecar_for(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn read_at(file: &File, offset: u64, buf: &mut [u8], what: &Path) -> Result<()> {
    file.read_exact_at(buf, offset)
        .map_err(|e| Error::Dataset(format!("short read from {} at {offset}: {e}", what.display())))
}

/// Validate every fvecs row header and return (rows, dim).
fn scan_fvecs(file: &File, file_len: u64, path: &Path) -> Result<(u64, usize)> {
    if file_len == 0 {
        return Ok((0, 0));
    }
    if file_len < 4 {
        return Err(Error::Dataset(format!("{}: truncated fvecs", path.display())));
    }
    let mut header = [0u8; 4];
    read_at(file, 0, &mut header, path)?;
    let dim = u32::from_le_bytes(header) as usize;
    if dim == 0 {
        return Err(Error::Dataset(format!("{}: fvecs row declares dim 0", path.display())));
    }
    let stride = (4 + dim * 4) as u64;
    if file_len % stride != 0 {
        return Err(Error::Dataset(format!(
            "{}: fvecs length {file_len} is not a multiple of row stride {stride}",
            path.display()
        )));
    }
    let n = file_len / stride;
    // cheap full scan of the row headers; catches per-row dim disagreement
    let mut reader = std::io::BufReader::new(file.try_clone()?);
    let mut row_header = [0u8; 4];
    let mut skip = vec![0u8; dim * 4];
    for i in 0..n {
        reader.read_exact(&mut row_header).map_err(|e| {
            Error::Dataset(format!("{}: truncated fvecs row {i}: {e}", path.display()))
        })?;
        let d = u32::from_le_bytes(row_header) as usize;
        if d != dim {
            return Err(Error::Dataset(format!(
                "{}: fvecs row {i} has dim {d}, expected {dim}",
                path.display()
            )));
        }
        reader.read_exact(&mut skip).map_err(|e| {
            Error::Dataset(format!("{}: truncated fvecs row {i}: {e}", path.display()))
        })?;
    }
    Ok((n, dim))
}
