//! Index-wide configuration and the parameter math derived from it.
//!
//! The hierarchy is sized from three knobs: the target on-disk cluster size
//! `C` (bytes), the vector size `V = dim * bytes(dtype)`, and the index depth
//! `L`. Everything else (cluster population, leader count, per-level fanout)
//! follows from those.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance metric used both at build and query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    Cosine,
    InnerProduct,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
            Metric::InnerProduct => "inner_product",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Metric::L2),
            "cosine" => Ok(Metric::Cosine),
            "inner_product" => Ok(Metric::InnerProduct),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

/// On-disk element type for embeddings. Distances are always computed in f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageDtype {
    F16,
    F32,
}

impl StorageDtype {
    pub fn bytes(&self) -> usize {
        match self {
            StorageDtype::F16 => 2,
            StorageDtype::F32 => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StorageDtype::F16 => "f16",
            StorageDtype::F32 => "f32",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f16" => Ok(StorageDtype::F16),
            "f32" => Ok(StorageDtype::F32),
            other => Err(Error::InvalidConfig(format!("unknown dtype {other:?}"))),
        }
    }
}

/// Immutable index-wide metadata fixed at build time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    /// Number of index levels; level `depth` is the leaf (cluster) level.
    pub depth: u32,
    pub metric: Metric,
    /// Embedding dimensionality.
    pub dim: usize,
    pub storage_dtype: StorageDtype,
    /// Desired on-disk cluster size in bytes.
    pub target_cluster_bytes: u64,
    /// Number of items in the indexed collection.
    pub n_items: u64,
    /// RNG seed for leader selection.
    pub seed: u64,
}

impl IndexConfig {
    /// Bytes of one stored vector (`V`).
    pub fn vector_bytes(&self) -> u64 {
        self.dim as u64 * self.storage_dtype.bytes() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidConfig("depth must be >= 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.target_cluster_bytes < self.vector_bytes() {
            return Err(Error::InvalidConfig(format!(
                "target_cluster_bytes {} is smaller than one vector ({} bytes)",
                self.target_cluster_bytes,
                self.vector_bytes()
            )));
        }
        Ok(())
    }
}

/// Parameters derived from an [`IndexConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexParams {
    /// Average cluster population `C / V`, rounded half-up, at least 1.
    pub items_per_cluster: u64,
    /// Number of cluster leaders `l = ceil(N / items_per_cluster)`.
    pub n_leaders: u64,
    /// Internal subsets per level `w = ceil(l^(1/L))`.
    pub fanout: u64,
}

/// Derive cluster population, leader count, and per-level fanout.
///
/// Rounding: `items_per_cluster` rounds half-up, `n_leaders` and `fanout`
/// round up. `fanout` is the smallest integer `w` with `w^depth >= n_leaders`.
pub fn compute_index_params(config: &IndexConfig) -> Result<IndexParams> {
    config.validate()?;
    if config.n_items == 0 {
        return Err(Error::InvalidConfig(
            "cannot index an empty collection (n_items = 0)".into(),
        ));
    }
    let v = config.vector_bytes();
    let c = config.target_cluster_bytes;
    // round-half-up of C / V in integer arithmetic
    let items_per_cluster = ((2 * c + v) / (2 * v)).max(1);
    let n_leaders = config.n_items.div_ceil(items_per_cluster).max(1);
    let fanout = integer_root_ceil(n_leaders, config.depth);
    Ok(IndexParams {
        items_per_cluster,
        n_leaders,
        fanout,
    })
}

/// Smallest `w >= 1` such that `w^depth >= n`.
fn integer_root_ceil(n: u64, depth: u32) -> u64 {
    debug_assert!(n >= 1 && depth >= 1);
    if depth == 1 {
        return n;
    }
    let mut w = (n as f64).powf(1.0 / depth as f64).ceil() as u64;
    w = w.max(1);
    // float roots can land one off in either direction; fix up exactly
    while checked_pow_ge(w.saturating_sub(1), depth, n) && w > 1 {
        w -= 1;
    }
    while !checked_pow_ge(w, depth, n) {
        w += 1;
    }
    w
}

/// `base^exp >= n`, computed without overflow.
fn checked_pow_ge(base: u64, exp: u32, n: u64) -> bool {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc *= base as u128;
        if acc >= n as u128 {
            return true;
        }
    }
    acc >= n as u128
}

/// Expected distance calculations for an expanded search:
/// `w + (L-1)*b*w + b*items_per_cluster`.
pub fn estimated_query_cost(params: &IndexParams, depth: u32, b: u64) -> u64 {
    let w = params.fanout;
    w + (depth as u64 - 1) * b * w + b * params.items_per_cluster
}
