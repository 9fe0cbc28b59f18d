//! Benchmark workloads: single-query and incremental retrieval with a
//! cold/warm latency split, plus task-completion scoring.
//!
//! "Cold" is application-cold: the node cache is cleared before the first
//! run of a workload, so run 0 reads nodes from disk and later runs are
//! served from memory. The OS page cache is not flushed.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::distance::ScoredItem;
use crate::error::{Error, Result};
use crate::search::IndexHandle;

/// Latencies for one query across all runs of a workload.
#[derive(Debug, Clone, Serialize)]
pub struct QueryLatencies {
    pub query_index: usize,
    /// First (disk/cold) run, seconds.
    pub cold_s: f64,
    /// One entry per warm run (`runs - 1` of them).
    pub warm_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadReport {
    pub workload: String,
    pub runs: u32,
    pub k: usize,
    pub b: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u32>,
    /// Wall-clock of opening the index, filled in by the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_time_s: Option<f64>,
    pub per_query: Vec<QueryLatencies>,
    pub per_run_wall_s: Vec<f64>,
    pub mean_cold_s: f64,
    pub mean_warm_s: f64,
    /// Mean per-call latency in run 0 / later runs (incremental workloads,
    /// where one query spans several calls).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_call_cold_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_call_warm_s: Option<f64>,
    pub mean_workload_s: f64,
    pub mean_warm_workload_s: f64,
}

impl WorkloadReport {
    /// One summary row mirroring the latency-table columns.
    pub fn csv_summary(&self) -> String {
        let mut out = String::from(
            "workload,runs,k,load_time_s,disk_mean_s,memory_mean_s,workload_mean_s,workload_warm_mean_s\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            self.workload,
            self.runs,
            self.k,
            self.load_time_s.map_or(String::new(), |v| format!("{v:.6}")),
            self.mean_call_cold_s.unwrap_or(self.mean_cold_s),
            self.mean_call_warm_s.unwrap_or(self.mean_warm_s),
            self.mean_workload_s,
            self.mean_warm_workload_s,
        ));
        out
    }

    fn finish(&mut self) {
        let q = self.per_query.len().max(1) as f64;
        self.mean_cold_s = self.per_query.iter().map(|p| p.cold_s).sum::<f64>() / q;
        let warm: Vec<f64> = self.per_query.iter().flat_map(|p| p.warm_s.iter().copied()).collect();
        self.mean_warm_s = if warm.is_empty() {
            0.0
        } else {
            warm.iter().sum::<f64>() / warm.len() as f64
        };
        self.mean_workload_s =
            self.per_run_wall_s.iter().sum::<f64>() / self.per_run_wall_s.len().max(1) as f64;
        let warm_runs = &self.per_run_wall_s[1.min(self.per_run_wall_s.len())..];
        self.mean_warm_workload_s = if warm_runs.is_empty() {
            0.0
        } else {
            warm_runs.iter().sum::<f64>() / warm_runs.len() as f64
        };
    }
}

fn validate_workload(queries: &[Vec<f32>], k: usize, runs: u32) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries supplied".into()));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if runs < 2 {
        return Err(Error::InvalidArgument(
            "runs must be >= 2 to split cold and warm latencies".into(),
        ));
    }
    Ok(())
}

/// Run every query `runs` times, each asking for the top `k` items. The
/// first run per query is the cold sample, the rest are warm.
pub fn run_single_query_workload(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    k: usize,
    b: u64,
    mx_inc: i64,
    runs: u32,
) -> Result<WorkloadReport> {
    validate_workload(queries, k, runs)?;
    handle.cache().clear();
    let none = HashSet::new();
    let mut report = blank_report("single_query", runs, k, b, None);
    report.per_query = (0..queries.len())
        .map(|query_index| QueryLatencies {
            query_index,
            cold_s: 0.0,
            warm_s: Vec::with_capacity(runs as usize - 1),
        })
        .collect();
    for run in 0..runs {
        let wall = Instant::now();
        for (qi, q) in queries.iter().enumerate() {
            let t = Instant::now();
            handle.new_search(q, k, b, mx_inc, &none)?;
            let dt = t.elapsed().as_secs_f64();
            if run == 0 {
                report.per_query[qi].cold_s = dt;
            } else {
                report.per_query[qi].warm_s.push(dt);
            }
        }
        report.per_run_wall_s.push(wall.elapsed().as_secs_f64());
    }
    report.finish();
    Ok(report)
}

/// Incremental workload: per query, one `new_search(k)` followed by
/// `rounds` requests for `k` more items from the retained query state.
pub fn run_incremental_workload(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    k: usize,
    b: u64,
    mx_inc: i64,
    rounds: u32,
    runs: u32,
) -> Result<WorkloadReport> {
    validate_workload(queries, k, runs)?;
    if rounds < 1 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    handle.cache().clear();
    let none = HashSet::new();
    let mut report = blank_report("incremental", runs, k, b, Some(rounds));
    report.per_query = (0..queries.len())
        .map(|query_index| QueryLatencies {
            query_index,
            cold_s: 0.0,
            warm_s: Vec::with_capacity(runs as usize - 1),
        })
        .collect();
    let mut call_cold = MeanAcc::default();
    let mut call_warm = MeanAcc::default();
    for run in 0..runs {
        let wall = Instant::now();
        for (qi, q) in queries.iter().enumerate() {
            let calls = if run == 0 { &mut call_cold } else { &mut call_warm };
            let t = Instant::now();
            let c = Instant::now();
            let (_, qid) = handle.new_search(q, k, b, mx_inc, &none)?;
            calls.add(c.elapsed().as_secs_f64());
            for _ in 0..rounds {
                let c = Instant::now();
                handle.get_next_k_items(qid, k, mx_inc, &none)?;
                calls.add(c.elapsed().as_secs_f64());
            }
            let dt = t.elapsed().as_secs_f64();
            if run == 0 {
                report.per_query[qi].cold_s = dt;
            } else {
                report.per_query[qi].warm_s.push(dt);
            }
        }
        report.per_run_wall_s.push(wall.elapsed().as_secs_f64());
    }
    report.mean_call_cold_s = Some(call_cold.mean());
    report.mean_call_warm_s = Some(call_warm.mean());
    report.finish();
    Ok(report)
}

/// The re-query baseline for engines without resumable queries: round `rd`
/// issues a fresh search for `k + k*rd` items instead of continuing the
/// previous one.
pub fn run_growing_k_workload(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    k: usize,
    b: u64,
    mx_inc: i64,
    rounds: u32,
    runs: u32,
) -> Result<WorkloadReport> {
    validate_workload(queries, k, runs)?;
    if rounds < 1 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    handle.cache().clear();
    let none = HashSet::new();
    let mut report = blank_report("incremental_growing_k", runs, k, b, Some(rounds));
    report.per_query = (0..queries.len())
        .map(|query_index| QueryLatencies {
            query_index,
            cold_s: 0.0,
            warm_s: Vec::with_capacity(runs as usize - 1),
        })
        .collect();
    for run in 0..runs {
        let wall = Instant::now();
        for (qi, q) in queries.iter().enumerate() {
            let t = Instant::now();
            handle.new_search(q, k, b, mx_inc, &none)?;
            for rd in 0..rounds as usize {
                handle.new_search(q, k + k * rd, b, mx_inc, &none)?;
            }
            let dt = t.elapsed().as_secs_f64();
            if run == 0 {
                report.per_query[qi].cold_s = dt;
            } else {
                report.per_query[qi].warm_s.push(dt);
            }
        }
        report.per_run_wall_s.push(wall.elapsed().as_secs_f64());
    }
    report.finish();
    Ok(report)
}

/// Opt-in throughput mode: queries within a run execute in parallel
/// (distinct query states, shared cache). Per-query latencies are recorded
/// but contended; the per-run wall clock is the number that matters here.
/// Latency-fidelity comparisons should use the sequential workloads.
pub fn run_single_query_workload_parallel(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    k: usize,
    b: u64,
    mx_inc: i64,
    runs: u32,
) -> Result<WorkloadReport> {
    validate_workload(queries, k, runs)?;
    handle.cache().clear();
    let mut report = blank_report("single_query_parallel", runs, k, b, None);
    report.per_query = (0..queries.len())
        .map(|query_index| QueryLatencies {
            query_index,
            cold_s: 0.0,
            warm_s: Vec::with_capacity(runs as usize - 1),
        })
        .collect();
    for run in 0..runs {
        let wall = Instant::now();
        let latencies: Vec<f64> = queries
            .par_iter()
            .map(|q| {
                let none = HashSet::new();
                let t = Instant::now();
                handle.new_search(q, k, b, mx_inc, &none)?;
                Ok(t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        for (qi, dt) in latencies.into_iter().enumerate() {
            if run == 0 {
                report.per_query[qi].cold_s = dt;
            } else {
                report.per_query[qi].warm_s.push(dt);
            }
        }
        report.per_run_wall_s.push(wall.elapsed().as_secs_f64());
    }
    report.finish();
    Ok(report)
}

/// Parallel variant of the incremental workload: each query drives its own
/// retained state on its own worker.
pub fn run_incremental_workload_parallel(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    k: usize,
    b: u64,
    mx_inc: i64,
    rounds: u32,
    runs: u32,
) -> Result<WorkloadReport> {
    validate_workload(queries, k, runs)?;
    if rounds < 1 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    handle.cache().clear();
    let mut report = blank_report("incremental_parallel", runs, k, b, Some(rounds));
    report.per_query = (0..queries.len())
        .map(|query_index| QueryLatencies {
            query_index,
            cold_s: 0.0,
            warm_s: Vec::with_capacity(runs as usize - 1),
        })
        .collect();
    for run in 0..runs {
        let wall = Instant::now();
        let latencies: Vec<f64> = queries
            .par_iter()
            .map(|q| {
                let none = HashSet::new();
                let t = Instant::now();
                let (_, qid) = handle.new_search(q, k, b, mx_inc, &none)?;
                for _ in 0..rounds {
                    handle.get_next_k_items(qid, k, mx_inc, &none)?;
                }
                Ok(t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        for (qi, dt) in latencies.into_iter().enumerate() {
            if run == 0 {
                report.per_query[qi].cold_s = dt;
            } else {
                report.per_query[qi].warm_s.push(dt);
            }
        }
        report.per_run_wall_s.push(wall.elapsed().as_secs_f64());
    }
    report.finish();
    Ok(report)
}

fn blank_report(workload: &str, runs: u32, k: usize, b: u64, rounds: Option<u32>) -> WorkloadReport {
    WorkloadReport {
        workload: workload.to_string(),
        runs,
        k,
        b,
        rounds,
        load_time_s: None,
        per_query: Vec::new(),
        per_run_wall_s: Vec::new(),
        mean_cold_s: 0.0,
        mean_warm_s: 0.0,
        mean_call_cold_s: None,
        mean_call_warm_s: None,
        mean_workload_s: 0.0,
        mean_warm_workload_s: 0.0,
    }
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    n: u64,
}

impl MeanAcc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// One retrieval task: a handful of query vectors (task step descriptions,
/// pre-embedded) and the ids that count as relevant.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub task_id: String,
    pub queries: Vec<Vec<f32>>,
    pub ground_truth: HashSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TaskCompletion {
    pub solved: u64,
    pub total: u64,
}

/// A task counts as solved if any of its queries placed at least one
/// ground-truth id in its returned items. `results_per_query` must line up
/// with the tasks' queries flattened in order.
pub fn compute_task_completion(
    results_per_query: &[Vec<ScoredItem>],
    tasks: &[TaskSpec],
) -> Result<TaskCompletion> {
    let expected: usize = tasks.iter().map(|t| t.queries.len()).sum();
    if results_per_query.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "{} query results for {} task queries",
            results_per_query.len(),
            expected
        )));
    }
    for task in tasks {
        if task.queries.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "task {} has no queries",
                task.task_id
            )));
        }
    }
    let mut solved = 0;
    let mut cursor = 0;
    for task in tasks {
        let n = task.queries.len();
        let hit = results_per_query[cursor..cursor + n]
            .iter()
            .any(|results| results.iter().any(|s| task.ground_truth.contains(&s.item_id)));
        if hit {
            solved += 1;
        }
        cursor += n;
    }
    Ok(TaskCompletion {
        solved,
        total: tasks.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_index, BuildOptions};
    use crate::cache::CacheConfig;
    use crate::dataset::Dataset;
    use crate::params::{IndexConfig, Metric, StorageDtype};
    use crate::search::open_index;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::TempDir;

    fn fixture(tmp: &TempDir) -> IndexHandle {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let data: Vec<f32> = (0..500 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = Dataset::from_vecs(data, 4).unwrap();
        let cfg = IndexConfig {
            depth: 2,
            metric: Metric::L2,
            dim: 4,
            storage_dtype: StorageDtype::F32,
            target_cluster_bytes: 10 * 16,
            n_items: 500,
            seed: 50,
        };
        build_index(&ds, &cfg, tmp.path().join("idx"), &BuildOptions::default()).unwrap();
        open_index(tmp.path().join("idx"), CacheConfig::default()).unwrap()
    }

    fn queries(n: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn two_runs_give_one_warm_sample() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let report = run_single_query_workload(&handle, &queries(5, 1), 10, 4, -1, 2).unwrap();
        assert_eq!(report.per_query.len(), 5);
        for p in &report.per_query {
            assert_eq!(p.warm_s.len(), 1);
        }
        assert_eq!(report.per_run_wall_s.len(), 2);
    }

    #[test]
    fn single_run_rejected() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        assert!(run_single_query_workload(&handle, &queries(2, 1), 10, 4, -1, 1).is_err());
    }

    #[test]
    fn report_arithmetic_is_consistent() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let report = run_single_query_workload(&handle, &queries(4, 2), 10, 4, -1, 3).unwrap();
        let cold_sum: f64 = report.per_query.iter().map(|p| p.cold_s).sum();
        assert!((report.mean_cold_s * 4.0 - cold_sum).abs() < 1e-9);
        let warm: Vec<f64> = report.per_query.iter().flat_map(|p| p.warm_s.clone()).collect();
        let warm_sum: f64 = warm.iter().sum();
        assert!((report.mean_warm_s * warm.len() as f64 - warm_sum).abs() < 1e-9);
    }

    #[test]
    fn incremental_survives_overdraining() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        // rounds*k far exceeds the 500-item collection
        let report =
            run_incremental_workload(&handle, &queries(2, 3), 100, 4, -1, 10, 2).unwrap();
        assert_eq!(report.per_query.len(), 2);
        assert_eq!(report.rounds, Some(10));
    }

    #[test]
    fn growing_k_baseline_runs() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let report = run_growing_k_workload(&handle, &queries(2, 4), 10, 4, -1, 3, 2).unwrap();
        assert_eq!(report.workload, "incremental_growing_k");
    }

    #[test]
    fn parallel_workloads_match_report_shape() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let qs = queries(6, 5);
        let single = run_single_query_workload_parallel(&handle, &qs, 10, 4, -1, 2).unwrap();
        assert_eq!(single.workload, "single_query_parallel");
        assert_eq!(single.per_query.len(), 6);
        for p in &single.per_query {
            assert_eq!(p.warm_s.len(), 1);
        }
        let inc = run_incremental_workload_parallel(&handle, &qs, 10, 4, -1, 3, 2).unwrap();
        assert_eq!(inc.per_run_wall_s.len(), 2);
    }

    #[test]
    fn task_completion_self_retrieval() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let q0 = handle.store().read_node(crate::store::NodeRef { level: 2, node_id: 0 }).unwrap();
        let item = q0.item_ids[0];
        let vector = q0.row(0).to_vec();
        let (results, _) = handle
            .new_search(&vector, 10, handle.manifest().params.n_leaders, -1, &HashSet::new())
            .unwrap();
        let tasks = vec![TaskSpec {
            task_id: "t0".into(),
            queries: vec![vector],
            ground_truth: [item].into_iter().collect(),
        }];
        let score = compute_task_completion(&[results], &tasks).unwrap();
        assert_eq!(score, TaskCompletion { solved: 1, total: 1 });
    }

    #[test]
    fn task_completion_excluded_ground_truth_scores_zero() {
        let tmp = TempDir::new().unwrap();
        let handle = fixture(&tmp);
        let q = queries(1, 9).pop().unwrap();
        let none = HashSet::new();
        let (top, _) = handle
            .new_search(&q, 10, handle.manifest().params.n_leaders, -1, &none)
            .unwrap();
        let gt: HashSet<u64> = top.iter().map(|s| s.item_id).collect();
        let (filtered, _) = handle
            .new_search(&q, 10, handle.manifest().params.n_leaders, -1, &gt)
            .unwrap();
        let tasks = vec![TaskSpec {
            task_id: "t0".into(),
            queries: vec![q],
            ground_truth: gt,
        }];
        let score = compute_task_completion(&[filtered], &tasks).unwrap();
        assert_eq!(score.solved, 0);
    }

    #[test]
    fn task_completion_matches_set_intersection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        // synthetic results and tasks scored against a plain intersection scan
        let mut tasks = Vec::new();
        let mut results = Vec::new();
        for t in 0..20 {
            let nq = rng.random_range(1..4usize);
            let gt: HashSet<u64> = (0..5).map(|_| rng.random_range(0..200u64)).collect();
            let mut task_queries = Vec::new();
            for _ in 0..nq {
                task_queries.push(vec![0.0f32; 4]);
                let items: Vec<ScoredItem> = (0..10)
                    .map(|_| ScoredItem {
                        distance: rng.random_range(0.0..1.0),
                        item_id: rng.random_range(0..200u64),
                    })
                    .collect();
                results.push(items);
            }
            tasks.push(TaskSpec {
                task_id: format!("t{t}"),
                queries: task_queries,
                ground_truth: gt,
            });
        }
        let got = compute_task_completion(&results, &tasks).unwrap();
        // oracle: independent scan
        let mut solved = 0;
        let mut cursor = 0;
        for task in &tasks {
            let mut hit = false;
            for results in &results[cursor..cursor + task.queries.len()] {
                for s in results {
                    if task.ground_truth.contains(&s.item_id) {
                        hit = true;
                    }
                }
            }
            cursor += task.queries.len();
            if hit {
                solved += 1;
            }
        }
        assert_eq!(got.solved, solved);
        assert_eq!(got.total, 20);
    }

    #[test]
    fn unmapped_query_rejected() {
        let tasks = vec![TaskSpec {
            task_id: "t".into(),
            queries: vec![vec![0.0; 4]],
            ground_truth: HashSet::new(),
        }];
        assert!(compute_task_completion(&[], &tasks).is_err());
    }
}
