//! ecpfs: a disk-based approximate nearest neighbor index whose entire
//! structure lives on disk as a browsable file hierarchy (Zarr v2 directory
//! store).
//!
//! The index is a hierarchy of clusters with randomly sampled leaders,
//! built top-down. Opening an index reads only its manifest and root; node
//! data is loaded lazily as queries touch it and retained under a
//! capacity-bounded LRU cache. Searches keep their priority-queue frontier
//! and result buffer alive, so "give me k more" continues a query instead
//! of restarting it, and query states can be persisted and resumed across
//! processes.
//!
//! See `docs/format.md` for the on-disk layout and `docs/formats.md` for
//! the input file formats.

pub mod builder;
pub mod cache;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod params;
pub mod search;
pub mod store;
pub mod workload;
pub mod zarr;

pub use builder::{assign_items, build_hierarchy, build_index, select_leaders};
pub use builder::{BuildOptions, BuildReport, BuildTimings, Hierarchy};
pub use cache::{CacheConfig, CachePolicy, CacheStats, NodeCache};
pub use dataset::{Dataset, VectorFormat};
pub use distance::{calculate_distances, cmp_scored, distance, ScoredItem};
pub use error::{Error, Result};
pub use params::{compute_index_params, estimated_query_cost};
pub use params::{IndexConfig, IndexParams, Metric, StorageDtype};
pub use search::{brute_force_search, open_index, IndexHandle, QueryInfo, QueueEntry};
pub use store::{read_manifest, IndexManifest, IndexStore, NodeData, NodeRef};
pub use workload::{
    compute_task_completion, run_growing_k_workload, run_incremental_workload,
    run_incremental_workload_parallel, run_single_query_workload,
    run_single_query_workload_parallel, TaskCompletion, TaskSpec, WorkloadReport,
};
