//! Top-down index construction: randomly sampled cluster leaders, hierarchy
//! wiring by greedy traversal of the partial index, and a streaming item
//! assignment pass that writes one cluster per leaf node.
//!
//! Leaders double as regular items, so every collection item lands in
//! exactly one leaf. Ties are broken toward the smaller node/item id
//! everywhere, which makes builds fully deterministic for a given seed.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::distance::distance;
use crate::error::{Error, Result};
use crate::params::{compute_index_params, IndexConfig, IndexParams};
use crate::store::{IndexManifest, IndexStore, NodeData, NodeRef};

/// Knobs for the build process itself (not persisted in the index).
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Rows per sequential read while streaming the dataset.
    pub batch_rows: u64,
    /// Upper bound on vectors buffered in memory while gathering clusters.
    /// Larger buffers mean fewer dataset passes.
    pub gather_buffer_rows: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            batch_rows: 8192,
            gather_buffer_rows: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BuildTimings {
    pub select_leaders_s: f64,
    pub build_hierarchy_s: f64,
    pub assign_items_s: f64,
    pub write_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub n_items: u64,
    pub dim: usize,
    pub params: IndexParams,
    pub node_counts: Vec<u64>,
    pub cluster_size_min: u64,
    pub cluster_size_max: u64,
    pub cluster_size_mean: f64,
    pub empty_clusters: u64,
    pub timings: BuildTimings,
}

/// Per-level leader lists. `leaders(depth)` are the leaf leaders; every
/// shallower level is a prefix of the next (nested by construction).
pub type LeaderLists = Vec<Vec<u64>>;

/// Seeded uniform sample of leader item ids for every level.
///
/// A single shuffle of all item indices drives every level: the leaf level
/// takes the first `n_leaders` entries, level `i < depth` takes the first
/// `ceil(n_leaders / fanout^(depth - i))`.
pub fn select_leaders(
    n_items: u64,
    params: &IndexParams,
    depth: u32,
    seed: u64,
) -> Result<LeaderLists> {
    if params.n_leaders > n_items {
        return Err(Error::InvalidConfig(format!(
            "{} leaders requested from {} items",
            params.n_leaders, n_items
        )));
    }
    let mut order: Vec<u64> = (0..n_items).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut levels = Vec::with_capacity(depth as usize);
    for level in 1..=depth {
        let count = level_leader_count(params, depth, level);
        levels.push(order[..count as usize].to_vec());
    }
    Ok(levels)
}

pub(crate) fn level_leader_count(params: &IndexParams, depth: u32, level: u32) -> u64 {
    if level == depth {
        return params.n_leaders;
    }
    let denom = (params.fanout as u128).pow(depth - level);
    (params.n_leaders as u128).div_ceil(denom) as u64
}

/// The in-memory shape of the index while it is being built. Node `j` at
/// every level shares leader row `j` (leader sets are nested prefixes).
#[derive(Debug)]
pub struct Hierarchy {
    pub(crate) dim: usize,
    /// Nodes per level, `level_counts[i]` is level `i + 1`.
    pub(crate) level_counts: Vec<u64>,
    /// Leaf-level leader item ids, one per node.
    pub(crate) leader_items: Vec<u64>,
    /// `[n_leaders x dim]` leaf-level leader embeddings.
    pub(crate) leader_embeddings: Vec<f32>,
    /// `children[i][j]` = node ids at level `i + 2` under node `j` of level
    /// `i + 1`. Has `depth - 1` entries; leaves have no child lists.
    pub(crate) children: Vec<Vec<Vec<u64>>>,
}

impl Hierarchy {
    pub fn depth(&self) -> u32 {
        self.level_counts.len() as u32
    }

    pub fn level_counts(&self) -> &[u64] {
        &self.level_counts
    }

    pub fn leader_items(&self) -> &[u64] {
        &self.leader_items
    }

    fn leader_row(&self, node_id: u64) -> &[f32] {
        let i = node_id as usize * self.dim;
        &self.leader_embeddings[i..i + self.dim]
    }

    /// Eligibility flags per level for descending to `to_level`: a node
    /// qualifies iff its subtree contains at least one level-`to_level`
    /// node. Nodes at `to_level` itself always qualify.
    fn reach_flags(&self, to_level: u32) -> Vec<Vec<bool>> {
        let mut flags: Vec<Vec<bool>> = Vec::with_capacity(to_level as usize);
        for level in 1..=to_level {
            flags.push(vec![level == to_level; self.level_counts[(level - 1) as usize] as usize]);
        }
        for level in (1..to_level).rev() {
            let li = (level - 1) as usize;
            for j in 0..self.level_counts[li] as usize {
                flags[li][j] = self.children[li][j]
                    .iter()
                    .any(|&c| flags[li + 1][c as usize]);
            }
        }
        flags
    }

    /// Greedy root-to-`to_level` descent: follow the single most similar
    /// eligible child at each level (smaller node id wins ties).
    fn descend(
        &self,
        query: &[f32],
        to_level: u32,
        reach: &[Vec<bool>],
        metric: crate::params::Metric,
    ) -> u64 {
        let k1 = self.level_counts[0];
        let mut current = best_candidate(
            (0..k1).filter(|&c| reach[0][c as usize]),
            |c| distance(metric, query, self.leader_row(c)),
        )
        .expect("no eligible level-1 node");
        for level in 1..to_level {
            let li = (level - 1) as usize;
            let kids = &self.children[li][current as usize];
            current = best_candidate(
                kids.iter().copied().filter(|&c| reach[li + 1][c as usize]),
                |c| distance(metric, query, self.leader_row(c)),
            )
            .expect("no eligible child during descent");
        }
        current
    }
}

/// Minimum by distance over candidates in ascending id order; strict `<`
/// keeps the first (smallest id) on ties.
fn best_candidate(candidates: impl Iterator<Item = u64>, mut dist: impl FnMut(u64) -> f32) -> Option<u64> {
    let mut best: Option<(f32, u64)> = None;
    for c in candidates {
        let d = dist(c);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, c)),
        }
    }
    best.map(|(_, c)| c)
}

/// Wire the hierarchy top-down: the root adopts every level-1 leader, then
/// each deeper leader is attached under the nearest node one level up,
/// found by traversing the partial index from the root.
pub fn build_hierarchy(
    dataset: &Dataset,
    leaders: &LeaderLists,
    config: &IndexConfig,
) -> Result<Hierarchy> {
    let depth = config.depth;
    if leaders.len() != depth as usize {
        return Err(Error::InvalidArgument(format!(
            "{} leader lists for depth {depth}",
            leaders.len()
        )));
    }
    for i in 0..leaders.len() - 1 {
        if leaders[i][..] != leaders[i + 1][..leaders[i].len()] {
            return Err(Error::InvalidArgument(format!(
                "level {} leaders are not a prefix of level {}",
                i + 1,
                i + 2
            )));
        }
    }
    let dim = config.dim;
    if dataset.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: dataset.dim(),
        });
    }
    let leaf_leaders = leaders.last().unwrap();
    let mut leader_embeddings = Vec::with_capacity(leaf_leaders.len() * dim);
    for &item in leaf_leaders {
        leader_embeddings.extend(dataset.row(item)?);
    }
    let level_counts: Vec<u64> = leaders.iter().map(|l| l.len() as u64).collect();
    let mut hierarchy = Hierarchy {
        dim,
        children: (0..depth.saturating_sub(1))
            .map(|li| vec![Vec::new(); level_counts[li as usize] as usize])
            .collect(),
        level_counts,
        leader_items: leaf_leaders.clone(),
        leader_embeddings,
    };
    for target in 2..=depth {
        let reach = hierarchy.reach_flags(target - 1);
        for j in 0..hierarchy.level_counts[(target - 1) as usize] {
            let parent = {
                let query = hierarchy.leader_row(j);
                hierarchy.descend(query, target - 1, &reach, config.metric)
            };
            hierarchy.children[(target - 2) as usize][parent as usize].push(j);
        }
    }
    Ok(hierarchy)
}

/// Assign every item (leaders included) to exactly one leaf by greedy
/// root-to-leaf traversal. Returns the leaf node id per item.
pub fn assign_items(
    dataset: &Dataset,
    hierarchy: &Hierarchy,
    config: &IndexConfig,
    batch_rows: u64,
) -> Result<Vec<u64>> {
    let depth = config.depth;
    let dim = config.dim;
    let reach = hierarchy.reach_flags(depth);
    let mut assignments = vec![0u64; dataset.len() as usize];
    dataset.for_each_batch(batch_rows, |start, rows| {
        let out: Vec<u64> = rows
            .par_chunks(dim)
            .map(|q| hierarchy.descend(q, depth, &reach, config.metric))
            .collect();
        assignments[start as usize..start as usize + out.len()].copy_from_slice(&out);
        Ok(())
    })?;
    Ok(assignments)
}

/// Build and persist a complete index at `path`.
pub fn build_index(
    dataset: &Dataset,
    config: &IndexConfig,
    path: impl AsRef<Path>,
    options: &BuildOptions,
) -> Result<BuildReport> {
    let total_start = Instant::now();
    if config.n_items != dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "config says {} items, dataset has {}",
            config.n_items,
            dataset.len()
        )));
    }
    if config.dim != dataset.dim() {
        return Err(Error::InvalidConfig(format!(
            "config says dim {}, dataset has {}",
            config.dim,
            dataset.dim()
        )));
    }
    let params = compute_index_params(config)?;
    let mut timings = BuildTimings::default();

    let t = Instant::now();
    let leaders = select_leaders(config.n_items, &params, config.depth, config.seed)?;
    timings.select_leaders_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let hierarchy = build_hierarchy(dataset, &leaders, config)?;
    timings.build_hierarchy_s = t.elapsed().as_secs_f64();

    let manifest = IndexManifest {
        config: config.clone(),
        params,
        node_counts: hierarchy.level_counts.clone(),
    };
    let store = IndexStore::create(path, manifest)?;

    let t = Instant::now();
    let assignments = assign_items(dataset, &hierarchy, config, options.batch_rows)?;
    timings.assign_items_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    write_skeleton(&store, &hierarchy)?;
    let cluster_sizes = write_clusters(&store, dataset, &hierarchy, &assignments, options)?;
    timings.write_s = t.elapsed().as_secs_f64();
    timings.total_s = total_start.elapsed().as_secs_f64();

    let n_leaves = cluster_sizes.len() as u64;
    let min = cluster_sizes.iter().copied().min().unwrap_or(0);
    let max = cluster_sizes.iter().copied().max().unwrap_or(0);
    let empty = cluster_sizes.iter().filter(|&&s| s == 0).count() as u64;
    Ok(BuildReport {
        n_items: config.n_items,
        dim: config.dim,
        params,
        node_counts: hierarchy.level_counts.clone(),
        cluster_size_min: min,
        cluster_size_max: max,
        cluster_size_mean: config.n_items as f64 / n_leaves as f64,
        empty_clusters: empty,
        timings,
    })
}

/// Write representatives, the root, and all internal nodes.
fn write_skeleton(store: &IndexStore, hierarchy: &Hierarchy) -> Result<()> {
    let dim = hierarchy.dim;
    store.write_representatives(&hierarchy.leader_embeddings, &hierarchy.leader_items)?;

    let k1 = hierarchy.level_counts[0];
    let root_ids: Vec<u64> = (0..k1).collect();
    let mut root_emb = Vec::with_capacity(k1 as usize * dim);
    for id in 0..k1 {
        root_emb.extend_from_slice(hierarchy.leader_row(id));
    }
    store.write_root(&NodeData::new(dim, root_emb, root_ids)?)?;

    for level in 1..hierarchy.depth() {
        let li = (level - 1) as usize;
        for j in 0..hierarchy.level_counts[li] {
            let kids = &hierarchy.children[li][j as usize];
            let mut emb = Vec::with_capacity(kids.len() * dim);
            for &c in kids {
                emb.extend_from_slice(hierarchy.leader_row(c));
            }
            store.write_node(
                NodeRef { level, node_id: j },
                &NodeData::new(dim, emb, kids.clone())?,
            )?;
        }
    }
    Ok(())
}

/// Gather cluster contents and write every leaf node. Leaves are processed
/// in id ranges sized to the gather buffer; each range is one sequential
/// pass over the dataset. Returns the leaf sizes.
fn write_clusters(
    store: &IndexStore,
    dataset: &Dataset,
    hierarchy: &Hierarchy,
    assignments: &[u64],
    options: &BuildOptions,
) -> Result<Vec<u64>> {
    let dim = hierarchy.dim;
    let depth = hierarchy.depth();
    let n_leaves = *hierarchy.level_counts.last().unwrap();
    let mut sizes = vec![0u64; n_leaves as usize];
    for &leaf in assignments {
        sizes[leaf as usize] += 1;
    }

    let buffer = options.gather_buffer_rows.max(1);
    let mut range_start = 0u64;
    while range_start < n_leaves {
        let mut range_end = range_start;
        let mut buffered = 0u64;
        while range_end < n_leaves {
            let s = sizes[range_end as usize];
            if range_end > range_start && buffered + s > buffer {
                break;
            }
            buffered += s;
            range_end += 1;
        }

        let mut bucket_ids: Vec<Vec<u64>> = (range_start..range_end)
            .map(|l| Vec::with_capacity(sizes[l as usize] as usize))
            .collect();
        let mut bucket_rows: Vec<Vec<f32>> = (range_start..range_end)
            .map(|l| Vec::with_capacity(sizes[l as usize] as usize * dim))
            .collect();
        dataset.for_each_batch(options.batch_rows, |start, rows| {
            for (offset, row) in rows.chunks(dim).enumerate() {
                let item = start + offset as u64;
                let leaf = assignments[item as usize];
                if leaf >= range_start && leaf < range_end {
                    let b = (leaf - range_start) as usize;
                    bucket_ids[b].push(item);
                    bucket_rows[b].extend_from_slice(row);
                }
            }
            Ok(())
        })?;
        for (b, leaf) in (range_start..range_end).enumerate() {
            store.write_node(
                NodeRef {
                    level: depth,
                    node_id: leaf,
                },
                &NodeData::new(dim, std::mem::take(&mut bucket_rows[b]), std::mem::take(&mut bucket_ids[b]))?,
            )?;
        }
        range_start = range_end;
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Metric, StorageDtype};
    use rand::{Rng, SeedableRng};
    use tempfile::TempDir;

    fn config(n_items: u64, dim: usize, ipc: u64, depth: u32, seed: u64) -> IndexConfig {
        IndexConfig {
            depth,
            metric: Metric::L2,
            dim,
            storage_dtype: StorageDtype::F32,
            target_cluster_bytes: ipc * dim as u64 * 4,
            n_items,
            seed,
        }
    }

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        Dataset::from_vecs(data, dim).unwrap()
    }

    #[test]
    fn leaders_exhaustive_single_level() {
        let params = IndexParams {
            items_per_cluster: 1,
            n_leaders: 10,
            fanout: 10,
        };
        let leaders = select_leaders(10, &params, 1, 42).unwrap();
        assert_eq!(leaders.len(), 1);
        let mut sorted = leaders[0].clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        // order is the seeded shuffle, not identity (overwhelmingly likely)
        assert_ne!(leaders[0], (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn leaders_nested_counts() {
        let params = IndexParams {
            items_per_cluster: 40,
            n_leaders: 125,
            fanout: 12,
        };
        let leaders = select_leaders(5000, &params, 2, 7).unwrap();
        assert_eq!(leaders[0].len(), 11); // ceil(125 / 12)
        assert_eq!(leaders[1].len(), 125);
        assert_eq!(leaders[0][..], leaders[1][..11]);
    }

    #[test]
    fn leaders_deterministic() {
        let params = IndexParams {
            items_per_cluster: 10,
            n_leaders: 50,
            fanout: 8,
        };
        let a = select_leaders(500, &params, 2, 99).unwrap();
        let b = select_leaders(500, &params, 2, 99).unwrap();
        assert_eq!(a, b);
        let c = select_leaders(500, &params, 2, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn leaders_reject_too_few_items() {
        let params = IndexParams {
            items_per_cluster: 1,
            n_leaders: 11,
            fanout: 11,
        };
        assert!(select_leaders(10, &params, 1, 0).is_err());
    }

    #[test]
    fn hierarchy_single_level_is_flat() {
        let ds = random_dataset(20, 4, 1);
        let cfg = config(20, 4, 2, 1, 1);
        let params = compute_index_params(&cfg).unwrap();
        let leaders = select_leaders(20, &params, 1, 1).unwrap();
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        assert_eq!(h.depth(), 1);
        assert_eq!(h.level_counts, vec![10]);
        assert!(h.children.is_empty());
    }

    #[test]
    fn hierarchy_reachability_and_child_sums() {
        let ds = random_dataset(5000, 16, 2);
        let cfg = config(5000, 16, 40, 2, 2);
        let params = compute_index_params(&cfg).unwrap();
        assert_eq!(params.n_leaders, 125);
        let leaders = select_leaders(5000, &params, 2, 2).unwrap();
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        assert_eq!(h.level_counts, vec![11, 125]);
        let total: usize = h.children[0].iter().map(|c| c.len()).sum();
        assert_eq!(total, 125);
        // every leaf reachable exactly once
        let mut seen = [false; 125];
        for kids in &h.children[0] {
            for &c in kids {
                assert!(!seen[c as usize], "leaf {c} reached twice");
                seen[c as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn equidistant_leader_goes_to_lower_node_id() {
        // leaders: level 1 = items [0, 1], level 2 = items [0, 1, 2, 3]
        // item 2 sits exactly between items 0 and 1
        let data = vec![
            0.0, 0.0, // item 0
            2.0, 0.0, // item 1
            1.0, 0.0, // item 2: equidistant
            1.9, 0.0, // item 3: nearer item 1
        ];
        let ds = Dataset::from_vecs(data, 2).unwrap();
        let cfg = config(4, 2, 1, 2, 0);
        let leaders = vec![vec![0, 1], vec![0, 1, 2, 3]];
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        // node ids at level 2 are positions in the leader list
        assert!(h.children[0][0].contains(&2), "tie should go to node 0");
        assert!(h.children[0][1].contains(&3));
    }

    #[test]
    fn assignment_partitions_all_items() {
        let ds = random_dataset(5000, 16, 3);
        let cfg = config(5000, 16, 40, 2, 3);
        let params = compute_index_params(&cfg).unwrap();
        let leaders = select_leaders(5000, &params, 2, 3).unwrap();
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        let assignments = assign_items(&ds, &h, &cfg, 512).unwrap();
        assert_eq!(assignments.len(), 5000);
        let mut sizes = vec![0u64; 125];
        for &a in &assignments {
            sizes[a as usize] += 1;
        }
        assert_eq!(sizes.iter().sum::<u64>(), 5000);
    }

    #[test]
    fn identical_vectors_land_in_one_cluster() {
        let ds = Dataset::from_vecs(vec![0.5f32; 1000 * 4], 4).unwrap();
        let cfg = config(1000, 4, 10, 2, 5);
        let params = compute_index_params(&cfg).unwrap();
        let leaders = select_leaders(1000, &params, 2, 5).unwrap();
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        let assignments = assign_items(&ds, &h, &cfg, 128).unwrap();
        assert!(assignments.iter().all(|&a| a == assignments[0]));
    }

    /// Independent recursive reimplementation of the greedy descent.
    fn oracle_leaf(h: &Hierarchy, q: &[f32], metric: Metric) -> u64 {
        fn subtree_reaches_leaf(h: &Hierarchy, level: u32, node: u64) -> bool {
            if level == h.depth() {
                return true;
            }
            h.children[(level - 1) as usize][node as usize]
                .iter()
                .any(|&c| subtree_reaches_leaf(h, level + 1, c))
        }
        fn pick(h: &Hierarchy, q: &[f32], metric: Metric, level: u32, candidates: &[u64]) -> u64 {
            let mut best = u64::MAX;
            let mut best_d = f32::INFINITY;
            for &c in candidates {
                if !subtree_reaches_leaf(h, level, c) {
                    continue;
                }
                let d = distance(metric, q, h.leader_row(c));
                if d < best_d || (d == best_d && c < best) {
                    best = c;
                    best_d = d;
                }
            }
            best
        }
        let mut level = 1;
        let all: Vec<u64> = (0..h.level_counts[0]).collect();
        let mut node = pick(h, q, metric, 1, &all);
        while level < h.depth() {
            node = pick(h, q, metric, level + 1, &h.children[(level - 1) as usize][node as usize]);
            level += 1;
        }
        node
    }

    #[test]
    fn assignment_matches_greedy_path_oracle() {
        let ds = random_dataset(600, 8, 9);
        let cfg = config(600, 8, 12, 3, 9);
        let params = compute_index_params(&cfg).unwrap();
        let leaders = select_leaders(600, &params, 3, 9).unwrap();
        let h = build_hierarchy(&ds, &leaders, &cfg).unwrap();
        let assignments = assign_items(&ds, &h, &cfg, 100).unwrap();
        for item in 0..600u64 {
            let q = ds.row(item).unwrap();
            assert_eq!(
                assignments[item as usize],
                oracle_leaf(&h, &q, cfg.metric),
                "item {item}"
            );
        }
    }

    #[test]
    fn build_writes_full_store() {
        let tmp = TempDir::new().unwrap();
        let ds = random_dataset(5000, 16, 4);
        let cfg = config(5000, 16, 40, 2, 4);
        let report = build_index(&ds, &cfg, tmp.path().join("idx"), &BuildOptions::default()).unwrap();
        assert_eq!(report.node_counts, vec![11, 125]);
        let store = IndexStore::open(tmp.path().join("idx")).unwrap();
        assert_eq!(store.manifest().node_count(2), 125);
        assert_eq!(store.level_dir_entries(1).unwrap(), 11);
        assert_eq!(store.level_dir_entries(2).unwrap(), 125);
        // partition: every id exactly once across leaves
        let mut seen = vec![false; 5000];
        for leaf in 0..125 {
            let node = store.read_node(NodeRef { level: 2, node_id: leaf }).unwrap();
            for &id in &node.item_ids {
                assert!(!seen[id as usize]);
                seen[id as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn build_single_item() {
        let tmp = TempDir::new().unwrap();
        let ds = Dataset::from_vecs(vec![1.0, 2.0], 2).unwrap();
        let cfg = config(1, 2, 10, 2, 0);
        let report = build_index(&ds, &cfg, tmp.path().join("idx"), &BuildOptions::default()).unwrap();
        assert_eq!(report.params.n_leaders, 1);
        let store = IndexStore::open(tmp.path().join("idx")).unwrap();
        let leaf = store.read_node(NodeRef { level: 2, node_id: 0 }).unwrap();
        assert_eq!(leaf.item_ids, vec![0]);
    }

    #[test]
    fn rebuild_same_seed_is_byte_identical() {
        let tmp = TempDir::new().unwrap();
        let ds = random_dataset(800, 8, 6);
        let cfg = config(800, 8, 20, 2, 123);
        build_index(&ds, &cfg, tmp.path().join("a"), &BuildOptions::default()).unwrap();
        // different gather buffer must not change the output
        build_index(
            &ds,
            &cfg,
            tmp.path().join("b"),
            &BuildOptions {
                batch_rows: 100,
                gather_buffer_rows: 64,
            },
        )
        .unwrap();
        let store = IndexStore::open(tmp.path().join("a")).unwrap();
        for level in 1..=2u32 {
            for node_id in 0..store.manifest().node_count(level) {
                let rel = format!("lvl_{level}/node_{node_id}/item_ids/0");
                let a = std::fs::read(tmp.path().join("a").join(&rel)).ok();
                let b = std::fs::read(tmp.path().join("b").join(&rel)).ok();
                assert_eq!(a, b, "{rel}");
            }
        }
        let a = std::fs::read(tmp.path().join("a/rep_item_ids/0")).unwrap();
        let b = std::fs::read(tmp.path().join("b/rep_item_ids/0")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leader_nesting_validated() {
        let ds = random_dataset(10, 2, 0);
        let cfg = config(10, 2, 2, 2, 0);
        let bad = vec![vec![3, 4], vec![0, 1, 2, 3, 4]];
        assert!(build_hierarchy(&ds, &bad, &cfg).is_err());
    }
}
