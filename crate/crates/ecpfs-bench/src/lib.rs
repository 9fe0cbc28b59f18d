//! Shared fixtures for the ecpfs microbenchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ecpfs::{build_index, BuildOptions, Dataset, IndexConfig, Metric, StorageDtype};

pub fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Build a two-level synthetic index and return the tempdir keeping it
/// alive. `ipc` is the target items per cluster.
pub fn synthetic_index(n: usize, dim: usize, ipc: u64, seed: u64) -> TempDir {
    let tmp = TempDir::new().expect("tempdir");
    let ds = Dataset::from_vecs(random_rows(n, dim, seed), dim).expect("dataset");
    let config = IndexConfig {
        depth: 2,
        metric: Metric::L2,
        dim,
        storage_dtype: StorageDtype::F32,
        target_cluster_bytes: ipc * dim as u64 * 4,
        n_items: n as u64,
        seed,
    };
    build_index(&ds, &config, tmp.path().join("idx"), &BuildOptions::default()).expect("build");
    tmp
}
