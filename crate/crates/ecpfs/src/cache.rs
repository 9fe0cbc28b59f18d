//! Capacity-bounded node cache with LRU eviction.
//!
//! All node reads during search go through here. The bound is a node count
//! (bytes are tracked in stats but not enforced). Returned nodes are `Arc`s,
//! so an eviction only drops the cache's retention — callers keep their data.
//! The index root and manifest are never cached here; they are pinned on the
//! handle at open time.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::store::{IndexStore, NodeData, NodeRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CachePolicy {
    #[default]
    Lru,
}

#[derive(Debug, Clone)]
pub struct CacheConfig {
    /// Maximum resident nodes; `None` means unbounded.
    pub capacity_nodes: Option<u64>,
    pub policy: CachePolicy,
    pub caching_enabled: bool,
    /// If set, nodes up to this level are loaded in the background at open.
    pub prefetch_to_level: Option<u32>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            capacity_nodes: None,
            policy: CachePolicy::Lru,
            caching_enabled: true,
            prefetch_to_level: None,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.caching_enabled && self.capacity_nodes == Some(0) {
            return Err(Error::InvalidConfig(
                "cache capacity 0 with caching enabled".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    /// Nodes loaded by prefetch (not counted as misses).
    pub prefetch_loads: u64,
    pub resident_nodes: u64,
    pub resident_bytes: u64,
}

struct Entry {
    data: Arc<NodeData>,
    tick: u64,
}

struct Inner {
    config: CacheConfig,
    map: HashMap<NodeRef, Entry>,
    recency: BTreeMap<u64, NodeRef>,
    next_tick: u64,
    hits: u64,
    misses: u64,
    evictions: u64,
    prefetch_loads: u64,
    resident_bytes: u64,
}

impl Inner {
    fn touch(&mut self, node: NodeRef) {
        let tick = self.next_tick;
        self.next_tick += 1;
        if let Some(entry) = self.map.get_mut(&node) {
            self.recency.remove(&entry.tick);
            entry.tick = tick;
            self.recency.insert(tick, node);
        }
    }

    fn evict_one(&mut self) {
        if let Some((_, node)) = self.recency.pop_first() {
            if let Some(entry) = self.map.remove(&node) {
                self.resident_bytes -= entry.data.approx_bytes();
                self.evictions += 1;
            }
        }
    }

    fn evict_to_capacity(&mut self) {
        if let Some(cap) = self.config.capacity_nodes {
            while self.map.len() as u64 > cap {
                self.evict_one();
            }
        }
    }

    fn insert(&mut self, node: NodeRef, data: Arc<NodeData>) {
        let tick = self.next_tick;
        self.next_tick += 1;
        if let Some(old) = self.map.remove(&node) {
            self.recency.remove(&old.tick);
            self.resident_bytes -= old.data.approx_bytes();
        }
        self.resident_bytes += data.approx_bytes();
        self.map.insert(node, Entry { data, tick });
        self.recency.insert(tick, node);
        self.evict_to_capacity();
    }

    fn drop_all(&mut self) {
        let n = self.map.len() as u64;
        self.map.clear();
        self.recency.clear();
        self.resident_bytes = 0;
        self.evictions += n;
    }

    fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits,
            misses: self.misses,
            evictions: self.evictions,
            prefetch_loads: self.prefetch_loads,
            resident_nodes: self.map.len() as u64,
            resident_bytes: self.resident_bytes,
        }
    }
}

/// Thread-safe read-through node cache over an [`IndexStore`].
pub struct NodeCache {
    inner: Mutex<Inner>,
}

impl NodeCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(NodeCache {
            inner: Mutex::new(Inner {
                config,
                map: HashMap::new(),
                recency: BTreeMap::new(),
                next_tick: 0,
                hits: 0,
                misses: 0,
                evictions: 0,
                prefetch_loads: 0,
                resident_bytes: 0,
            }),
        })
    }

    /// Fetch a node, reading through to the store on a miss. Store I/O
    /// happens outside the cache lock; insertions are atomic.
    pub fn get_node(&self, store: &IndexStore, node: NodeRef) -> Result<Arc<NodeData>> {
        let caching = {
            let mut inner = self.inner.lock().unwrap();
            if let Some(entry) = inner.map.get(&node) {
                let data = entry.data.clone();
                inner.touch(node);
                inner.hits += 1;
                return Ok(data);
            }
            inner.misses += 1;
            inner.config.caching_enabled
        };
        let data = Arc::new(store.read_node(node)?);
        if caching {
            let mut inner = self.inner.lock().unwrap();
            inner.insert(node, data.clone());
        }
        Ok(data)
    }

    /// Load every node with `level <= max_level` into the cache. Returns the
    /// number of nodes read from the store. Already-resident nodes are
    /// touched, not re-read. With caching disabled this is a no-op.
    pub fn prefetch(&self, store: &IndexStore, max_level: u32) -> Result<u64> {
        let depth = store.manifest().config.depth;
        if max_level > depth {
            return Err(Error::InvalidArgument(format!(
                "prefetch level {max_level} exceeds index depth {depth}"
            )));
        }
        if !self.inner.lock().unwrap().config.caching_enabled {
            return Ok(0);
        }
        let mut loaded = 0;
        for level in 1..=max_level {
            for node_id in 0..store.manifest().node_count(level) {
                let node = NodeRef { level, node_id };
                {
                    let mut inner = self.inner.lock().unwrap();
                    if inner.map.contains_key(&node) {
                        inner.touch(node);
                        continue;
                    }
                    if !inner.config.caching_enabled {
                        return Ok(loaded);
                    }
                }
                let data = Arc::new(store.read_node(node)?);
                let mut inner = self.inner.lock().unwrap();
                inner.prefetch_loads += 1;
                inner.insert(node, data);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn stats(&self) -> CacheStats {
        self.inner.lock().unwrap().stats()
    }

    /// Swap in a new configuration. Shrinking the capacity evicts down to
    /// the new bound immediately; disabling caching drops everything.
    pub fn reconfigure(&self, config: CacheConfig) -> Result<()> {
        config.validate()?;
        let mut inner = self.inner.lock().unwrap();
        inner.config = config;
        if !inner.config.caching_enabled {
            inner.drop_all();
        } else {
            inner.evict_to_capacity();
        }
        Ok(())
    }

    pub fn config(&self) -> CacheConfig {
        self.inner.lock().unwrap().config.clone()
    }

    /// Drop all resident nodes (counted as evictions). Stats counters keep
    /// accumulating; use [`NodeCache::reset_stats`] to zero them.
    pub fn clear(&self) {
        self.inner.lock().unwrap().drop_all();
    }

    pub fn reset_stats(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.hits = 0;
        inner.misses = 0;
        inner.evictions = 0;
        inner.prefetch_loads = 0;
    }

    /// Resident node refs, most recently used last.
    pub fn resident_refs(&self) -> Vec<NodeRef> {
        let inner = self.inner.lock().unwrap();
        inner.recency.values().copied().collect()
    }
}
