//! The on-disk index layout: a Zarr v2 directory store holding `info`,
//! `rep_embeddings`, `rep_item_ids`, `index_root`, and one `lvl_<i>` group
//! per index level, each node a group of `embeddings` and `item_ids` arrays.
//!
//! Embeddings are stored in the configured storage dtype and widened to f32
//! on read. Item ids are u64 little-endian. One chunk per array, so reading
//! a node is a single I/O per array. Unknown extra groups in the store are
//! left alone: reads ignore them, writes never delete them.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::params::{IndexConfig, IndexParams, Metric, StorageDtype};
use crate::zarr::{self, Dtype};

pub const INFO_GROUP: &str = "info";
pub const REP_EMBEDDINGS: &str = "rep_embeddings";
pub const REP_ITEM_IDS: &str = "rep_item_ids";
pub const INDEX_ROOT: &str = "index_root";
pub const EMBEDDINGS_ARRAY: &str = "embeddings";
pub const ITEM_IDS_ARRAY: &str = "item_ids";

/// Address of a node: levels are 1-based, `depth` is the leaf level; node
/// ids are dense and 0-based within a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub level: u32,
    pub node_id: u64,
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "lvl_{}/node_{}", self.level, self.node_id)
    }
}

/// Payload of one node: a `[n_children x dim]` embedding matrix (always f32
/// in memory) and the matching ids. For internal levels the ids are child
/// node ids at `level + 1`; at the leaf level they are collection item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    pub dim: usize,
    pub embeddings: Vec<f32>,
    pub item_ids: Vec<u64>,
}

impl NodeData {
    pub fn new(dim: usize, embeddings: Vec<f32>, item_ids: Vec<u64>) -> Result<Self> {
        if embeddings.len() != dim * item_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "node embeddings ({} values, dim {}) do not match {} ids",
                embeddings.len(),
                dim,
                item_ids.len()
            )));
        }
        Ok(NodeData {
            dim,
            embeddings,
            item_ids,
        })
    }

    pub fn empty(dim: usize) -> Self {
        NodeData {
            dim,
            embeddings: Vec::new(),
            item_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// Approximate resident size, used for cache byte accounting.
    pub fn approx_bytes(&self) -> u64 {
        (self.embeddings.len() * 4 + self.item_ids.len() * 8) as u64
    }
}

/// Everything needed to open and validate a store: the build config, the
/// derived parameters, and the per-level node counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexManifest {
    pub config: IndexConfig,
    pub params: IndexParams,
    /// `node_counts[i]` is the number of nodes at level `i + 1`.
    pub node_counts: Vec<u64>,
}

impl IndexManifest {
    pub fn node_count(&self, level: u32) -> u64 {
        self.node_counts[(level - 1) as usize]
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.node_counts.len() != self.config.depth as usize {
            return Err(Error::Manifest(format!(
                "node_counts has {} entries for depth {}",
                self.node_counts.len(),
                self.config.depth
            )));
        }
        if *self.node_counts.last().unwrap() != self.params.n_leaders {
            return Err(Error::Manifest(format!(
                "leaf level has {} nodes but n_leaders is {}",
                self.node_counts.last().unwrap(),
                self.params.n_leaders
            )));
        }
        Ok(())
    }

    fn to_attrs(&self) -> serde_json::Value {
        json!({
            "levels": self.config.depth,
            "metric": self.config.metric.as_str(),
            "dim": self.config.dim,
            "dtype": self.config.storage_dtype.as_str(),
            "total_items": self.config.n_items,
            "seed": self.config.seed,
            "target_cluster_bytes": self.config.target_cluster_bytes,
            "items_per_cluster": self.params.items_per_cluster,
            "n_leaders": self.params.n_leaders,
            "fanout": self.params.fanout,
            "node_counts": self.node_counts,
        })
    }

    fn from_attrs(attrs: &serde_json::Value) -> Result<Self> {
        fn get_u64(attrs: &serde_json::Value, key: &str) -> Result<u64> {
            attrs
                .get(key)
                .ok_or_else(|| Error::Manifest(format!("missing attribute {key:?}")))?
                .as_u64()
                .ok_or_else(|| Error::Manifest(format!("attribute {key:?} is not a non-negative integer")))
        }
        fn get_str<'a>(attrs: &'a serde_json::Value, key: &str) -> Result<&'a str> {
            attrs
                .get(key)
                .ok_or_else(|| Error::Manifest(format!("missing attribute {key:?}")))?
                .as_str()
                .ok_or_else(|| Error::Manifest(format!("attribute {key:?} is not a string")))
        }
        let depth = get_u64(attrs, "levels")?;
        if depth < 1 {
            return Err(Error::Manifest("levels must be >= 1".into()));
        }
        let metric = Metric::parse(get_str(attrs, "metric")?)
            .map_err(|_| Error::Manifest("unknown metric".into()))?;
        let storage_dtype = StorageDtype::parse(get_str(attrs, "dtype")?)
            .map_err(|_| Error::Manifest("unknown dtype".into()))?;
        let node_counts: Vec<u64> = attrs
            .get("node_counts")
            .ok_or_else(|| Error::Manifest("missing attribute \"node_counts\"".into()))?
            .as_array()
            .ok_or_else(|| Error::Manifest("node_counts is not an array".into()))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| Error::Manifest("node_counts entry is not an integer".into()))
            })
            .collect::<Result<_>>()?;
        let manifest = IndexManifest {
            config: IndexConfig {
                depth: depth as u32,
                metric,
                dim: get_u64(attrs, "dim")? as usize,
                storage_dtype,
                target_cluster_bytes: get_u64(attrs, "target_cluster_bytes")?,
                n_items: get_u64(attrs, "total_items")?,
                seed: get_u64(attrs, "seed")?,
            },
            params: IndexParams {
                items_per_cluster: get_u64(attrs, "items_per_cluster")?,
                n_leaders: get_u64(attrs, "n_leaders")?,
                fanout: get_u64(attrs, "fanout")?,
            },
            node_counts,
        };
        manifest.validate().map_err(|e| match e {
            Error::Manifest(m) => Error::Manifest(m),
            other => Error::Manifest(other.to_string()),
        })?;
        Ok(manifest)
    }
}

/// Handle to an index store rooted at a directory.
#[derive(Debug)]
pub struct IndexStore {
    root: PathBuf,
    manifest: IndexManifest,
}

impl IndexStore {
    /// Create the directory skeleton for a new index.
    ///
    /// Fails if `path` exists and is non-empty. Writes the root group, the
    /// `info` group with the manifest attributes, placeholder groups for the
    /// representative arrays, `index_root`, and one `lvl_<i>` group per level.
    pub fn create(path: impl AsRef<Path>, manifest: IndexManifest) -> Result<Self> {
        manifest.validate()?;
        let root = path.as_ref().to_path_buf();
        if root.exists() && (!root.is_dir() || root.read_dir()?.next().is_some()) {
            return Err(Error::StoreExists(root));
        }
        zarr::write_group(&root)?;
        let info = root.join(INFO_GROUP);
        zarr::write_group(&info)?;
        zarr::write_attrs(&info, &manifest.to_attrs())?;
        zarr::write_group(&root.join(REP_EMBEDDINGS))?;
        zarr::write_group(&root.join(REP_ITEM_IDS))?;
        zarr::write_group(&root.join(INDEX_ROOT))?;
        for level in 1..=manifest.config.depth {
            zarr::write_group(&root.join(format!("lvl_{level}")))?;
        }
        Ok(IndexStore { root, manifest })
    }

    /// Open an existing store by reading its manifest.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        let manifest = read_manifest(&root)?;
        Ok(IndexStore { root, manifest })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    fn dim(&self) -> usize {
        self.manifest.config.dim
    }

    fn storage_dtype(&self) -> Dtype {
        match self.manifest.config.storage_dtype {
            StorageDtype::F16 => Dtype::F16,
            StorageDtype::F32 => Dtype::F32,
        }
    }

    fn check_ref(&self, node: NodeRef) -> Result<()> {
        if node.level < 1
            || node.level > self.manifest.config.depth
            || node.node_id >= self.manifest.node_count(node.level)
        {
            return Err(Error::NodeOutOfRange {
                level: node.level,
                node_id: node.node_id,
            });
        }
        Ok(())
    }

    pub fn node_dir(&self, node: NodeRef) -> PathBuf {
        self.root
            .join(format!("lvl_{}", node.level))
            .join(format!("node_{}", node.node_id))
    }

    fn write_pair(&self, dir: &Path, data: &NodeData) -> Result<()> {
        if data.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.dim,
            });
        }
        zarr::write_group(dir)?;
        zarr::write_matrix(
            &dir.join(EMBEDDINGS_ARRAY),
            data.len() as u64,
            data.dim as u64,
            self.storage_dtype(),
            &data.embeddings,
        )?;
        zarr::write_u64_vector(&dir.join(ITEM_IDS_ARRAY), &data.item_ids)?;
        Ok(())
    }

    fn read_pair(&self, dir: &Path) -> Result<NodeData> {
        let (rows, dim, embeddings) = zarr::read_matrix(&dir.join(EMBEDDINGS_ARRAY))?;
        if dim as usize != self.dim() {
            return Err(Error::CorruptArray {
                path: dir.to_path_buf(),
                reason: format!("embedding dim {} does not match index dim {}", dim, self.dim()),
            });
        }
        let item_ids = zarr::read_u64_vector(&dir.join(ITEM_IDS_ARRAY))?;
        if item_ids.len() as u64 != rows {
            return Err(Error::CorruptArray {
                path: dir.to_path_buf(),
                reason: format!("{} embedding rows but {} ids", rows, item_ids.len()),
            });
        }
        NodeData::new(self.dim(), embeddings, item_ids)
    }

    pub fn write_node(&self, node: NodeRef, data: &NodeData) -> Result<()> {
        self.check_ref(node)?;
        self.write_pair(&self.node_dir(node), data)
    }

    pub fn read_node(&self, node: NodeRef) -> Result<NodeData> {
        self.check_ref(node)?;
        let dir = self.node_dir(node);
        if !zarr::array_exists(&dir.join(EMBEDDINGS_ARRAY)) {
            return Err(Error::NodeAbsent {
                level: node.level,
                node_id: node.node_id,
            });
        }
        self.read_pair(&dir)
    }

    /// Row count of a node from its `.zarray` descriptor alone (no chunk I/O).
    pub fn node_len(&self, node: NodeRef) -> Result<u64> {
        self.check_ref(node)?;
        let dir = self.node_dir(node).join(EMBEDDINGS_ARRAY);
        if !zarr::array_exists(&dir) {
            return Err(Error::NodeAbsent {
                level: node.level,
                node_id: node.node_id,
            });
        }
        let meta = zarr::read_meta(&dir)?;
        Ok(meta.shape[0])
    }

    pub fn write_root(&self, data: &NodeData) -> Result<()> {
        for &id in &data.item_ids {
            if id >= self.manifest.node_count(1) {
                return Err(Error::InvalidArgument(format!(
                    "root child {} out of range for level 1 ({} nodes)",
                    id,
                    self.manifest.node_count(1)
                )));
            }
        }
        self.write_pair(&self.root.join(INDEX_ROOT), data)
    }

    pub fn read_root(&self) -> Result<NodeData> {
        let dir = self.root.join(INDEX_ROOT);
        if !zarr::array_exists(&dir.join(EMBEDDINGS_ARRAY)) {
            return Err(Error::Manifest("index_root has not been written".into()));
        }
        let root = self.read_pair(&dir)?;
        for &id in &root.item_ids {
            if id >= self.manifest.node_count(1) {
                return Err(Error::CorruptArray {
                    path: dir,
                    reason: format!("root child {id} out of range for level 1"),
                });
            }
        }
        Ok(root)
    }

    pub fn write_representatives(&self, embeddings: &[f32], item_ids: &[u64]) -> Result<()> {
        let l = self.manifest.params.n_leaders as usize;
        if item_ids.len() != l || embeddings.len() != l * self.dim() {
            return Err(Error::InvalidArgument(format!(
                "representatives must have exactly {} entries, got {}",
                l,
                item_ids.len()
            )));
        }
        zarr::write_matrix(
            &self.root.join(REP_EMBEDDINGS),
            l as u64,
            self.dim() as u64,
            self.storage_dtype(),
            embeddings,
        )?;
        zarr::write_u64_vector(&self.root.join(REP_ITEM_IDS), item_ids)?;
        Ok(())
    }

    pub fn read_representatives(&self) -> Result<(Vec<f32>, Vec<u64>)> {
        let (rows, _, embeddings) = zarr::read_matrix(&self.root.join(REP_EMBEDDINGS))?;
        let item_ids = zarr::read_u64_vector(&self.root.join(REP_ITEM_IDS))?;
        if rows != self.manifest.params.n_leaders || item_ids.len() as u64 != rows {
            return Err(Error::CorruptArray {
                path: self.root.join(REP_EMBEDDINGS),
                reason: format!(
                    "expected {} representatives, found {} embeddings / {} ids",
                    self.manifest.params.n_leaders,
                    rows,
                    item_ids.len()
                ),
            });
        }
        Ok((embeddings, item_ids))
    }

    /// Number of `node_<id>` groups physically present at a level.
    pub fn level_dir_entries(&self, level: u32) -> Result<u64> {
        let dir = self.root.join(format!("lvl_{level}"));
        let mut n = 0;
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_dir()
                && entry.file_name().to_string_lossy().starts_with("node_")
            {
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Read and validate an index manifest from `<path>/info/.zattrs`.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<IndexManifest> {
    let info = path.as_ref().join(INFO_GROUP);
    if !info.is_dir() {
        return Err(Error::Manifest(format!(
            "{} is not an index store (missing info group)",
            path.as_ref().display()
        )));
    }
    let attrs = zarr::read_attrs(&info)?;
    IndexManifest::from_attrs(&attrs)
}
