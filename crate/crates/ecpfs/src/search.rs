//! The incremental retrieval engine.
//!
//! One best-first priority queue per query holds internal nodes and leaves
//! together; the best entry is opened regardless of level. Leaves are
//! scanned into a result buffer until `b` of them have been read, then the
//! buffer either satisfies the request or `b` doubles and the search
//! resumes. Query state (queue, buffer, counters) survives between calls,
//! so follow-up requests continue where the previous one stopped instead of
//! re-searching, and can be persisted to disk and resumed in another
//! process.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;

use serde_json::json;

use crate::cache::{CacheConfig, CacheStats, NodeCache};
use crate::dataset::Dataset;
use crate::distance::{calculate_distances, cmp_scored, ScoredItem};
use crate::error::{Error, Result};
use crate::params::Metric;
use crate::store::{IndexManifest, IndexStore, NodeData, NodeRef};
use crate::zarr;

/// Frontier entry: ascending order by (distance, level, node_id).
#[derive(Debug, Clone, Copy)]
pub struct QueueEntry {
    pub distance: f32,
    pub is_leaf: bool,
    pub level: u32,
    pub node_id: u64,
}

impl QueueEntry {
    fn key(&self) -> (f32, u32, u64) {
        (self.distance, self.level, self.node_id)
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (d1, l1, n1) = self.key();
        let (d2, l2, n2) = other.key();
        d1.total_cmp(&d2).then(l1.cmp(&l2)).then(n1.cmp(&n2))
    }
}

/// One active query: the vector, the frontier `T`, the result buffer `I`
/// (sorted ascending between refills), and the expansion counters.
#[derive(Debug)]
pub struct QueryState {
    query: Vec<f32>,
    frontier: BinaryHeap<Reverse<QueueEntry>>,
    results: Vec<ScoredItem>,
    b_current: u64,
    increments: u64,
    leaves_scanned: u64,
    seeded: bool,
}

/// Snapshot of a query's counters, for inspection and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct QueryInfo {
    pub b_current: u64,
    pub increments: u64,
    pub leaves_scanned: u64,
    pub buffered: usize,
    pub frontier_len: usize,
    pub seeded: bool,
}

/// An open index: pinned manifest and root, the node cache, and the table
/// of active query states (query id = insertion index).
pub struct IndexHandle {
    store: Arc<IndexStore>,
    cache: Arc<NodeCache>,
    root: NodeData,
    queries: RwLock<Vec<Arc<Mutex<QueryState>>>>,
    prefetch: Mutex<Option<JoinHandle<Result<u64>>>>,
}

/// Open an index for searching. Reads only the manifest and the root; no
/// node arrays are touched until a query needs them. If the cache config
/// asks for prefetching, it starts on a background thread.
pub fn open_index(path: impl AsRef<Path>, cache_config: CacheConfig) -> Result<IndexHandle> {
    cache_config.validate()?;
    let store = Arc::new(IndexStore::open(path)?);
    let root = store.read_root()?;
    let cache = Arc::new(NodeCache::new(cache_config.clone())?);
    let handle = IndexHandle {
        store: store.clone(),
        cache: cache.clone(),
        root,
        queries: RwLock::new(Vec::new()),
        prefetch: Mutex::new(None),
    };
    if let Some(level) = cache_config.prefetch_to_level {
        if level > store.manifest().config.depth {
            return Err(Error::InvalidConfig(format!(
                "prefetch level {level} exceeds index depth {}",
                store.manifest().config.depth
            )));
        }
        let t = std::thread::spawn(move || cache.prefetch(&store, level));
        *handle.prefetch.lock().unwrap() = Some(t);
    }
    Ok(handle)
}

impl IndexHandle {
    pub fn open(path: impl AsRef<Path>, cache_config: CacheConfig) -> Result<Self> {
        open_index(path, cache_config)
    }

    pub fn manifest(&self) -> &IndexManifest {
        self.store.manifest()
    }

    pub fn store(&self) -> &IndexStore {
        &self.store
    }

    pub fn root(&self) -> &NodeData {
        &self.root
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn cache(&self) -> &NodeCache {
        &self.cache
    }

    fn dim(&self) -> usize {
        self.manifest().config.dim
    }

    fn depth(&self) -> u32 {
        self.manifest().config.depth
    }

    fn metric(&self) -> Metric {
        self.manifest().config.metric
    }

    /// Block until a background prefetch (if any) finishes; returns the
    /// number of nodes it loaded.
    pub fn wait_for_prefetch(&self) -> Result<u64> {
        let handle = self.prefetch.lock().unwrap().take();
        match handle {
            Some(t) => t.join().map_err(|_| Error::QueryState("prefetch thread panicked".into()))?,
            None => Ok(0),
        }
    }

    pub fn query_count(&self) -> usize {
        self.queries.read().unwrap().len()
    }

    fn query(&self, query_id: usize) -> Result<Arc<Mutex<QueryState>>> {
        self.queries
            .read()
            .unwrap()
            .get(query_id)
            .cloned()
            .ok_or(Error::UnknownQueryId(query_id))
    }

    /// A query id may be driven by one call at a time; concurrent drives of
    /// the same id are rejected rather than interleaved.
    fn lock_query<'a>(
        &self,
        arc: &'a Arc<Mutex<QueryState>>,
        query_id: usize,
    ) -> Result<MutexGuard<'a, QueryState>> {
        arc.try_lock().map_err(|_| Error::QueryBusy(query_id))
    }

    /// Start a new search: create a query state, run the incremental search,
    /// and return the first batch of up to `k` items with the query id.
    pub fn new_search(
        &self,
        query: &[f32],
        k: usize,
        b: u64,
        mx_inc: i64,
        exclude: &HashSet<u64>,
    ) -> Result<(Vec<ScoredItem>, usize)> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: query.len(),
            });
        }
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if b < 1 {
            return Err(Error::InvalidArgument("b must be >= 1".into()));
        }
        validate_mx_inc(mx_inc)?;
        let state = QueryState {
            query: query.to_vec(),
            frontier: BinaryHeap::new(),
            results: Vec::new(),
            b_current: b,
            increments: 0,
            leaves_scanned: 0,
            seeded: false,
        };
        let query_id = {
            let mut table = self.queries.write().unwrap();
            table.push(Arc::new(Mutex::new(state)));
            table.len() - 1
        };
        self.incremental_search(query_id, k, mx_inc, exclude)?;
        let results = self.get_next_k_items(query_id, k, mx_inc, exclude)?;
        Ok((results, query_id))
    }

    /// Fetch up to `k` more items for an active query. Refills the buffer by
    /// resuming the incremental search when it holds fewer than `k` items
    /// and the frontier is not exhausted. Items are removed from the front
    /// of the buffer; an id is never emitted twice for one query.
    pub fn get_next_k_items(
        &self,
        query_id: usize,
        k: usize,
        mx_inc: i64,
        exclude: &HashSet<u64>,
    ) -> Result<Vec<ScoredItem>> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        validate_mx_inc(mx_inc)?;
        let arc = self.query(query_id)?;
        let mut qs = self.lock_query(&arc, query_id)?;
        if qs.results.len() < k && !qs.frontier.is_empty() {
            self.run_incremental(&mut qs, k, mx_inc, exclude)?;
        }
        let cnt = qs.results.len().min(k);
        Ok(qs.results.drain(..cnt).collect())
    }

    /// Advance a query's state until its buffer can satisfy `k` items, the
    /// expansion budget is spent, or the frontier is exhausted.
    pub fn incremental_search(
        &self,
        query_id: usize,
        k: usize,
        mx_inc: i64,
        exclude: &HashSet<u64>,
    ) -> Result<()> {
        validate_mx_inc(mx_inc)?;
        let arc = self.query(query_id)?;
        let mut qs = self.lock_query(&arc, query_id)?;
        self.run_incremental(&mut qs, k, mx_inc, exclude)
    }

    fn run_incremental(
        &self,
        qs: &mut QueryState,
        k: usize,
        mx_inc: i64,
        exclude: &HashSet<u64>,
    ) -> Result<()> {
        let depth = self.depth();
        if !qs.seeded {
            let dists =
                calculate_distances(&self.root.embeddings, self.dim(), &qs.query, self.metric())?;
            let is_leaf = depth == 1;
            for (d, &child) in dists.iter().zip(&self.root.item_ids) {
                qs.frontier.push(Reverse(QueueEntry {
                    distance: *d,
                    is_leaf,
                    level: 1,
                    node_id: child,
                }));
            }
            qs.seeded = true;
        }
        loop {
            // stop check fires whenever the scanned-leaf budget is spent,
            // including immediately on resume
            if qs.leaves_scanned >= qs.b_current {
                if qs.results.len() >= k {
                    break;
                }
                if mx_inc == -1 || qs.increments < mx_inc as u64 {
                    qs.increments += 1;
                    qs.b_current = qs.b_current.saturating_mul(2);
                } else {
                    break;
                }
            }
            let Some(Reverse(entry)) = qs.frontier.pop() else {
                break;
            };
            let node = self.cache.get_node(
                &self.store,
                NodeRef {
                    level: entry.level,
                    node_id: entry.node_id,
                },
            )?;
            if node.is_empty() {
                continue;
            }
            let dists = calculate_distances(&node.embeddings, self.dim(), &qs.query, self.metric())?;
            if entry.is_leaf {
                for (d, &id) in dists.iter().zip(&node.item_ids) {
                    if !exclude.contains(&id) {
                        qs.results.push(ScoredItem {
                            distance: *d,
                            item_id: id,
                        });
                    }
                }
                qs.leaves_scanned += 1;
            } else {
                let child_level = entry.level + 1;
                let child_is_leaf = child_level == depth;
                for (d, &child) in dists.iter().zip(&node.item_ids) {
                    qs.frontier.push(Reverse(QueueEntry {
                        distance: *d,
                        is_leaf: child_is_leaf,
                        level: child_level,
                        node_id: child,
                    }));
                }
            }
        }
        qs.results.sort_by(cmp_scored);
        Ok(())
    }

    pub fn query_info(&self, query_id: usize) -> Result<QueryInfo> {
        let arc = self.query(query_id)?;
        let qs = self.lock_query(&arc, query_id)?;
        Ok(QueryInfo {
            b_current: qs.b_current,
            increments: qs.increments,
            leaves_scanned: qs.leaves_scanned,
            buffered: qs.results.len(),
            frontier_len: qs.frontier.len(),
            seeded: qs.seeded,
        })
    }

    /// Persist a query state as a small Zarr group: a JSON descriptor plus
    /// arrays for the frontier and the result buffer.
    pub fn save_query_state(&self, query_id: usize, dir: impl AsRef<Path>) -> Result<()> {
        let arc = self.query(query_id)?;
        let qs = self.lock_query(&arc, query_id)?;
        let dir = dir.as_ref();
        zarr::write_group(dir)?;
        let attrs = json!({
            "format": "ecpfs-query-state",
            "version": 1,
            "metric": self.metric().as_str(),
            "dim": self.dim(),
            "query": qs.query,
            "b_current": qs.b_current,
            "increments": qs.increments,
            "leaves_scanned": qs.leaves_scanned,
            "seeded": qs.seeded,
        });
        zarr::write_attrs(dir, &attrs)?;

        let mut entries: Vec<QueueEntry> = qs.frontier.iter().map(|r| r.0).collect();
        entries.sort();
        let dists: Vec<f32> = entries.iter().map(|e| e.distance).collect();
        let levels: Vec<u64> = entries.iter().map(|e| e.level as u64).collect();
        let nodes: Vec<u64> = entries.iter().map(|e| e.node_id).collect();
        zarr::write_array(
            &dir.join("frontier_distances"),
            &[dists.len() as u64],
            zarr::Dtype::F32,
            &zarr::encode_f32(&dists, zarr::Dtype::F32)?,
        )?;
        zarr::write_u64_vector(&dir.join("frontier_levels"), &levels)?;
        zarr::write_u64_vector(&dir.join("frontier_node_ids"), &nodes)?;

        let rd: Vec<f32> = qs.results.iter().map(|s| s.distance).collect();
        let ri: Vec<u64> = qs.results.iter().map(|s| s.item_id).collect();
        zarr::write_array(
            &dir.join("result_distances"),
            &[rd.len() as u64],
            zarr::Dtype::F32,
            &zarr::encode_f32(&rd, zarr::Dtype::F32)?,
        )?;
        zarr::write_u64_vector(&dir.join("result_item_ids"), &ri)?;
        Ok(())
    }

    /// Restore a persisted query state; returns its new query id. The
    /// restored query continues exactly where the saved one stopped.
    pub fn load_query_state(&self, dir: impl AsRef<Path>) -> Result<usize> {
        let dir = dir.as_ref();
        let attrs = zarr::read_attrs(dir)?;
        let bad = |m: String| Error::QueryState(m);
        if attrs.get("format").and_then(|v| v.as_str()) != Some("ecpfs-query-state") {
            return Err(bad(format!("{} is not a query state", dir.display())));
        }
        let dim = attrs
            .get("dim")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad("missing dim".into()))? as usize;
        if dim != self.dim() {
            return Err(bad(format!(
                "query state dim {dim} does not match index dim {}",
                self.dim()
            )));
        }
        let metric = attrs
            .get("metric")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing metric".into()))?;
        if metric != self.metric().as_str() {
            return Err(bad(format!(
                "query state metric {metric} does not match index metric {}",
                self.metric().as_str()
            )));
        }
        let query: Vec<f32> = attrs
            .get("query")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("missing query vector".into()))?
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("query vector is not numeric".into()))?;
        if query.len() != dim {
            return Err(bad("query vector length does not match dim".into()));
        }
        let get_u64 = |key: &str| -> Result<u64> {
            attrs
                .get(key)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| bad(format!("missing counter {key:?}")))
        };
        let b_current = get_u64("b_current")?;
        let increments = get_u64("increments")?;
        let leaves_scanned = get_u64("leaves_scanned")?;
        let seeded = attrs
            .get("seeded")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| bad("missing seeded flag".into()))?;
        if b_current < 1 {
            return Err(bad("b_current must be >= 1".into()));
        }

        let (fd_meta, fd_raw) = zarr::read_array(&dir.join("frontier_distances"))?;
        let fd = zarr::decode_f32(&fd_raw, fd_meta.dtype, dir)?;
        let levels = zarr::read_u64_vector(&dir.join("frontier_levels"))?;
        let nodes = zarr::read_u64_vector(&dir.join("frontier_node_ids"))?;
        if fd.len() != levels.len() || fd.len() != nodes.len() {
            return Err(bad("frontier arrays disagree in length".into()));
        }
        let depth = self.depth();
        let mut frontier = BinaryHeap::with_capacity(fd.len());
        for i in 0..fd.len() {
            let level = levels[i];
            if level < 1 || level > depth as u64 {
                return Err(bad(format!("frontier level {level} out of range")));
            }
            let level = level as u32;
            if nodes[i] >= self.manifest().node_count(level) {
                return Err(bad(format!(
                    "frontier node {} out of range at level {level}",
                    nodes[i]
                )));
            }
            frontier.push(Reverse(QueueEntry {
                distance: fd[i],
                is_leaf: level == depth,
                level,
                node_id: nodes[i],
            }));
        }

        let (rd_meta, rd_raw) = zarr::read_array(&dir.join("result_distances"))?;
        let rd = zarr::decode_f32(&rd_raw, rd_meta.dtype, dir)?;
        let ri = zarr::read_u64_vector(&dir.join("result_item_ids"))?;
        if rd.len() != ri.len() {
            return Err(bad("result arrays disagree in length".into()));
        }
        let results = rd
            .into_iter()
            .zip(ri)
            .map(|(distance, item_id)| ScoredItem { distance, item_id })
            .collect();

        let state = QueryState {
            query,
            frontier,
            results,
            b_current,
            increments,
            leaves_scanned,
            seeded,
        };
        let mut table = self.queries.write().unwrap();
        table.push(Arc::new(Mutex::new(state)));
        Ok(table.len() - 1)
    }
}

fn validate_mx_inc(mx_inc: i64) -> Result<()> {
    if mx_inc < -1 {
        return Err(Error::InvalidArgument(
            "mx_inc must be -1 (unlimited) or >= 0".into(),
        ));
    }
    Ok(())
}

/// Exact k-NN by full dataset scan, with the engine's tie-breaking. The
/// reference every approximate result is judged against.
pub fn brute_force_search(
    dataset: &Dataset,
    query: &[f32],
    k: usize,
    metric: Metric,
    exclude: &HashSet<u64>,
) -> Result<Vec<ScoredItem>> {
    let dim = dataset.dim();
    let mut all = Vec::with_capacity(dataset.len() as usize);
    dataset.for_each_batch(8192, |start, rows| {
        let dists = calculate_distances(rows, dim, query, metric)?;
        for (offset, d) in dists.into_iter().enumerate() {
            let item_id = start + offset as u64;
            if !exclude.contains(&item_id) {
                all.push(ScoredItem {
                    distance: d,
                    item_id,
                });
            }
        }
        Ok(())
    })?;
    all.sort_by(cmp_scored);
    all.truncate(k);
    Ok(all)
}
