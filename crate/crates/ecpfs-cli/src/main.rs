//! `ecpfs` — build, query, resume, inspect, and benchmark file-structure
//! ANN indexes.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecpfs::{
    build_index, open_index, BuildOptions, CacheConfig, Dataset, IndexConfig, IndexHandle, Metric,
    ScoredItem, StorageDtype, TaskSpec, VectorFormat,
};

#[derive(Parser)]
#[command(name = "ecpfs", version, about = "Disk-based ANN index as a file structure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a vector file
    Build(BuildArgs),
    /// Search an index; optionally persist query states for later resumes
    Query(QueryArgs),
    /// Fetch the next batch of results for a persisted query
    Next(NextArgs),
    /// Show an index's manifest, node counts, and cluster-size distribution
    Inspect(InspectArgs),
    /// Run the single-query or incremental benchmark workload
    Bench(BenchArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Input vector file
    #[arg(long)]
    input: PathBuf,
    /// Input format (inferred from the extension when omitted)
    #[arg(long)]
    format: Option<String>,
    /// Index depth (number of levels)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    levels: u32,
    /// Target on-disk cluster size in bytes
    #[arg(long)]
    cluster_bytes: u64,
    #[arg(long, default_value = "l2")]
    metric: String,
    /// On-disk embedding dtype: f16 or f32
    #[arg(long, default_value = "f32")]
    dtype: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output index directory (must not exist or be empty)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct CacheArgs {
    /// Maximum nodes resident in memory (unbounded when omitted)
    #[arg(long, env = "ECPFS_CACHE_NODES")]
    cache_nodes: Option<u64>,
    /// Disable node caching entirely
    #[arg(long, env = "ECPFS_NO_CACHE")]
    no_cache: bool,
    /// Prefetch all nodes up to this level at open
    #[arg(long, env = "ECPFS_PREFETCH_LEVEL")]
    prefetch_level: Option<u32>,
}

impl CacheArgs {
    fn to_config(&self) -> CacheConfig {
        CacheConfig {
            capacity_nodes: self.cache_nodes,
            caching_enabled: !self.no_cache,
            prefetch_to_level: self.prefetch_level,
            ..CacheConfig::default()
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// fbin file with one or more query vectors
    #[arg(long)]
    query_file: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Search expansion: leaf clusters scanned before the stop check
    #[arg(long, default_value_t = 64)]
    b: u64,
    /// Times b may double (-1 = unlimited)
    #[arg(long, default_value_t = -1, value_parser = clap::value_parser!(i64).range(-1..))]
    max_inc: i64,
    /// Text file of item ids to exclude, one per line
    #[arg(long)]
    exclude_file: Option<PathBuf>,
    /// Directory for persisted query states (enables `ecpfs next`)
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[command(flatten)]
    cache: CacheArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct NextArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query id printed by `ecpfs query --state-dir ...`
    #[arg(long)]
    query_id: u64,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = -1, value_parser = clap::value_parser!(i64).range(-1..))]
    max_inc: i64,
    #[arg(long)]
    exclude_file: Option<PathBuf>,
    /// Directory holding persisted query states
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[command(flatten)]
    cache: CacheArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    index: PathBuf,
    /// Show a single node (requires --node)
    #[arg(long)]
    level: Option<u32>,
    /// Node id to show (requires --level)
    #[arg(long)]
    node: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Workload: single | incremental
    #[arg(long)]
    mode: String,
    /// fbin file of query vectors
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    b: u64,
    #[arg(long, default_value_t = -1, value_parser = clap::value_parser!(i64).range(-1..))]
    max_inc: i64,
    /// Repetitions per workload (>= 2 so cold and warm split)
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    runs: u32,
    /// Follow-up requests per query (incremental mode)
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    rounds: u32,
    /// Re-query with growing k instead of resuming (incremental mode)
    #[arg(long)]
    baseline: bool,
    /// Throughput mode: run queries within a run in parallel
    #[arg(long, conflicts_with = "baseline")]
    parallel: bool,
    /// Task ground-truth JSON for completion scoring
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[command(flatten)]
    cache: CacheArgs,
    #[arg(long)]
    json: bool,
}

fn main() {
    // die quietly when the consumer of a pipe goes away (e.g. `| head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Next(args) => cmd_next(args),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Bench(args) => cmd_bench(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn resolve_format(path: &Path, flag: &Option<String>) -> Result<VectorFormat> {
    if let Some(s) = flag {
        return Ok(VectorFormat::parse(s)?);
    }
    VectorFormat::from_extension(path).ok_or_else(|| {
        anyhow::anyhow!(
            "cannot infer format of {} — pass --format fbin|fvecs|raw-f16",
            path.display()
        )
    })
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    let format = resolve_format(&args.input, &args.format)?;
    let dataset = Dataset::open(&args.input, format)?;
    let config = IndexConfig {
        depth: args.levels,
        metric: Metric::parse(&args.metric)?,
        dim: dataset.dim(),
        storage_dtype: StorageDtype::parse(&args.dtype)?,
        target_cluster_bytes: args.cluster_bytes,
        n_items: dataset.len(),
        seed: args.seed,
    };
    let report = build_index(&dataset, &config, &args.out, &BuildOptions::default())
        .with_context(|| format!("building index at {}", args.out.display()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("built index at {}", args.out.display());
        println!("  items:            {}", report.n_items);
        println!("  dim:              {}", report.dim);
        println!("  items_per_cluster: {}", report.params.items_per_cluster);
        println!("  n_leaders:        {}", report.params.n_leaders);
        println!("  fanout:           {}", report.params.fanout);
        println!("  node_counts:      {:?}", report.node_counts);
        println!(
            "  cluster sizes:    min {} / mean {:.1} / max {} ({} empty)",
            report.cluster_size_min,
            report.cluster_size_mean,
            report.cluster_size_max,
            report.empty_clusters
        );
        println!("  build time:       {:.3}s", report.timings.total_s);
    }
    Ok(())
}

fn read_exclusions(path: &Option<PathBuf>) -> Result<HashSet<u64>> {
    let Some(path) = path else {
        return Ok(HashSet::new());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading exclusion file {}", path.display()))?;
    let mut out = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: u64 = line
            .parse()
            .with_context(|| format!("{}:{}: not an item id", path.display(), lineno + 1))?;
        out.insert(id);
    }
    Ok(out)
}

fn load_queries(path: &Path, handle: &IndexHandle) -> Result<Vec<Vec<f32>>> {
    let ds = Dataset::open(path, VectorFormat::Fbin)
        .with_context(|| format!("reading query file {}", path.display()))?;
    if ds.dim() != handle.manifest().config.dim {
        bail!(
            "query file dim {} does not match index dim {}",
            ds.dim(),
            handle.manifest().config.dim
        );
    }
    (0..ds.len()).map(|i| Ok(ds.row(i)?)).collect()
}

fn states_dir(state_dir: &Path) -> PathBuf {
    state_dir.join("query_states")
}

fn state_path(state_dir: &Path, id: u64) -> PathBuf {
    states_dir(state_dir).join(format!("q{id}"))
}

/// Next free persistent query id in a state directory.
fn next_state_id(state_dir: &Path) -> Result<u64> {
    let dir = states_dir(state_dir);
    if !dir.exists() {
        return Ok(0);
    }
    let mut next = 0;
    for entry in std::fs::read_dir(&dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(n) = name.strip_prefix('q').and_then(|s| s.parse::<u64>().ok()) {
            next = next.max(n + 1);
        }
    }
    Ok(next)
}

fn print_results(results: &[ScoredItem]) {
    for (rank, item) in results.iter().enumerate() {
        println!("{:>4}  {:>12}  {:.6}", rank + 1, item.item_id, item.distance);
    }
}

fn results_json(results: &[ScoredItem]) -> serde_json::Value {
    serde_json::json!(results
        .iter()
        .map(|s| serde_json::json!({"item_id": s.item_id, "distance": s.distance}))
        .collect::<Vec<_>>())
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let handle = open_index(&args.index, args.cache.to_config())?;
    handle.wait_for_prefetch()?;
    let queries = load_queries(&args.query_file, &handle)?;
    let exclude = read_exclusions(&args.exclude_file)?;
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let (results, query_id) = handle.new_search(q, args.k, args.b, args.max_inc, &exclude)?;
        let printed_id = match &args.state_dir {
            Some(dir) => {
                let id = next_state_id(dir)?;
                handle.save_query_state(query_id, state_path(dir, id))?;
                id
            }
            None => query_id as u64,
        };
        if args.json {
            out.push(serde_json::json!({
                "query_index": qi,
                "query_id": printed_id,
                "persisted": args.state_dir.is_some(),
                "results": results_json(&results),
            }));
        } else {
            match &args.state_dir {
                Some(dir) => println!(
                    "query {qi}: query_id {printed_id} (state saved under {})",
                    states_dir(dir).display()
                ),
                None => println!(
                    "query {qi}: query_id {printed_id} (not persisted; pass --state-dir to resume later)"
                ),
            }
            print_results(&results);
        }
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({"queries": out}))?);
    }
    Ok(())
}

fn cmd_next(args: NextArgs) -> Result<()> {
    let Some(state_dir) = &args.state_dir else {
        bail!(
            "resuming across processes needs persisted state: run `ecpfs query --state-dir <dir>` \
             first, then pass the same --state-dir here"
        );
    };
    let path = state_path(state_dir, args.query_id);
    if !path.exists() {
        bail!("no saved state for query id {} under {}", args.query_id, states_dir(state_dir).display());
    }
    let handle = open_index(&args.index, args.cache.to_config())?;
    handle.wait_for_prefetch()?;
    let exclude = read_exclusions(&args.exclude_file)?;
    let qid = handle.load_query_state(&path)?;
    let results = handle.get_next_k_items(qid, args.k, args.max_inc, &exclude)?;
    handle.save_query_state(qid, &path)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "query_id": args.query_id,
                "returned": results.len(),
                "results": results_json(&results),
            }))?
        );
    } else {
        if results.is_empty() {
            println!("query {} is drained (no more results)", args.query_id);
        }
        print_results(&results);
    }
    Ok(())
}

const HISTOGRAM_BUCKETS: usize = 10;

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    match (args.level, args.node) {
        (Some(level), Some(node_id)) => return inspect_node(&args, level, node_id),
        (None, None) => {}
        _ => bail!("--level and --node go together"),
    }
    let store = ecpfs::IndexStore::open(&args.index)?;
    let m = store.manifest();
    let depth = m.config.depth;

    let mut leaf_sizes = Vec::with_capacity(m.node_count(depth) as usize);
    for node_id in 0..m.node_count(depth) {
        leaf_sizes.push(store.node_len(ecpfs::NodeRef { level: depth, node_id })?);
    }
    let total: u64 = leaf_sizes.iter().sum();
    let min = leaf_sizes.iter().copied().min().unwrap_or(0);
    let max = leaf_sizes.iter().copied().max().unwrap_or(0);
    let mean = total as f64 / leaf_sizes.len().max(1) as f64;
    let empty = leaf_sizes.iter().filter(|&&s| s == 0).count() as u64;

    // equal-width buckets over [min, max]
    let width = ((max - min) / HISTOGRAM_BUCKETS as u64).max(1);
    let mut buckets: Vec<(u64, u64, u64, u64)> = (0..HISTOGRAM_BUCKETS as u64)
        .map(|i| (min + i * width, min + (i + 1) * width, 0, 0))
        .collect();
    if let Some(last) = buckets.last_mut() {
        last.1 = max + 1;
    }
    for &s in &leaf_sizes {
        let i = (((s - min) / width) as usize).min(HISTOGRAM_BUCKETS - 1);
        buckets[i].2 += 1;
        buckets[i].3 += s;
    }

    if args.json {
        let histogram: Vec<_> = buckets
            .iter()
            .map(|(lo, hi, leaves, items)| {
                serde_json::json!({"lo": lo, "hi": hi, "leaves": leaves, "items": items})
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "levels": depth,
                "metric": m.config.metric.as_str(),
                "dim": m.config.dim,
                "dtype": m.config.storage_dtype.as_str(),
                "total_items": m.config.n_items,
                "seed": m.config.seed,
                "target_cluster_bytes": m.config.target_cluster_bytes,
                "items_per_cluster": m.params.items_per_cluster,
                "n_leaders": m.params.n_leaders,
                "fanout": m.params.fanout,
                "node_counts": m.node_counts,
                "leaf_size_min": min,
                "leaf_size_max": max,
                "leaf_size_mean": mean,
                "empty_leaves": empty,
                "items_in_leaves": total,
                "histogram": histogram,
            }))?
        );
    } else {
        println!("index {}", args.index.display());
        println!("  levels:   {depth}");
        println!("  metric:   {}", m.config.metric.as_str());
        println!("  dim:      {}", m.config.dim);
        println!("  dtype:    {}", m.config.storage_dtype.as_str());
        println!("  items:    {}", m.config.n_items);
        println!("  seed:     {}", m.config.seed);
        println!("  leaders:  {}", m.params.n_leaders);
        println!("  fanout:   {}", m.params.fanout);
        for level in 1..=depth {
            println!("  lvl_{level} nodes: {}", m.node_count(level));
        }
        println!(
            "  cluster sizes: min {min} / mean {mean:.1} / max {max} ({empty} empty), {total} items"
        );
        println!("  histogram (size range: leaves, items):");
        for (lo, hi, leaves, items) in &buckets {
            println!("    [{lo:>6}, {hi:>6}): {leaves:>8} leaves, {items:>10} items");
        }
    }
    Ok(())
}

fn inspect_node(args: &InspectArgs, level: u32, node_id: u64) -> Result<()> {
    let store = ecpfs::IndexStore::open(&args.index)?;
    let node = store
        .read_node(ecpfs::NodeRef { level, node_id })
        .with_context(|| format!("inspecting lvl_{level}/node_{node_id}"))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "level": level,
                "node_id": node_id,
                "children": node.len(),
                "child_kind": if level == store.manifest().config.depth { "item" } else { "node" },
                "child_ids": node.item_ids,
            }))?
        );
    } else {
        let kind = if level == store.manifest().config.depth {
            "items"
        } else {
            "child nodes"
        };
        println!("lvl_{level}/node_{node_id}: {} {kind}", node.len());
        for id in &node.item_ids {
            println!("  {id}");
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let t = Instant::now();
    let handle = open_index(&args.index, args.cache.to_config())?;
    handle.wait_for_prefetch()?;
    let load_time_s = t.elapsed().as_secs_f64();
    let queries = load_queries(&args.queries, &handle)?;

    let mut report = match (args.mode.as_str(), args.parallel) {
        ("single", false) => ecpfs::run_single_query_workload(
            &handle, &queries, args.k, args.b, args.max_inc, args.runs,
        )?,
        ("single", true) => ecpfs::run_single_query_workload_parallel(
            &handle, &queries, args.k, args.b, args.max_inc, args.runs,
        )?,
        ("incremental", false) => {
            if args.baseline {
                ecpfs::run_growing_k_workload(
                    &handle, &queries, args.k, args.b, args.max_inc, args.rounds, args.runs,
                )?
            } else {
                ecpfs::run_incremental_workload(
                    &handle, &queries, args.k, args.b, args.max_inc, args.rounds, args.runs,
                )?
            }
        }
        ("incremental", true) => ecpfs::run_incremental_workload_parallel(
            &handle, &queries, args.k, args.b, args.max_inc, args.rounds, args.runs,
        )?,
        (other, _) => bail!("unknown mode {other:?} (expected single or incremental)"),
    };
    report.load_time_s = Some(load_time_s);

    let completion = match &args.ground_truth {
        Some(path) => Some(score_tasks(&handle, &queries, path, args.k, args.b, args.max_inc)?),
        None => None,
    };

    if let Some(path) = &args.out_json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(path) = &args.out_csv {
        std::fs::write(path, report.csv_summary())?;
    }

    if args.json {
        let mut value = serde_json::to_value(&report)?;
        if let Some(c) = completion {
            value["task_completion"] = serde_json::to_value(c)?;
        }
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("workload:       {}", report.workload);
        println!("queries:        {}", report.per_query.len());
        println!("runs:           {}", report.runs);
        println!("load time:      {load_time_s:.3}s");
        println!("disk (cold):    {:.6}s mean", report.mean_call_cold_s.unwrap_or(report.mean_cold_s));
        println!("memory (warm):  {:.6}s mean", report.mean_call_warm_s.unwrap_or(report.mean_warm_s));
        println!("workload mean:  {:.3}s ({:.3}s warm)", report.mean_workload_s, report.mean_warm_workload_s);
        if let Some(c) = completion {
            println!("tasks solved:   {}/{}", c.solved, c.total);
        }
    }
    Ok(())
}

/// Ground-truth JSON: `{"tasks": [{"task_id": "...", "query_indices": [..],
/// "ground_truth": [..]}]}` with indices into the bench query file.
fn score_tasks(
    handle: &IndexHandle,
    queries: &[Vec<f32>],
    path: &Path,
    k: usize,
    b: u64,
    mx_inc: i64,
) -> Result<ecpfs::TaskCompletion> {
    #[derive(serde::Deserialize)]
    struct GtTask {
        task_id: String,
        query_indices: Vec<usize>,
        ground_truth: Vec<u64>,
    }
    #[derive(serde::Deserialize)]
    struct GtFile {
        tasks: Vec<GtTask>,
    }
    let gt: GtFile = serde_json::from_slice(
        &std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
    )
    .with_context(|| format!("parsing {}", path.display()))?;

    let none = HashSet::new();
    let mut tasks = Vec::with_capacity(gt.tasks.len());
    let mut results_per_query = Vec::new();
    for t in gt.tasks {
        let mut task_queries = Vec::with_capacity(t.query_indices.len());
        for &qi in &t.query_indices {
            let q = queries
                .get(qi)
                .with_context(|| format!("task {}: query index {qi} out of range", t.task_id))?;
            let (results, _) = handle.new_search(q, k, b, mx_inc, &none)?;
            results_per_query.push(results);
            task_queries.push(q.clone());
        }
        tasks.push(TaskSpec {
            task_id: t.task_id,
            queries: task_queries,
            ground_truth: t.ground_truth.into_iter().collect(),
        });
    }
    Ok(ecpfs::compute_task_completion(&results_per_query, &tasks)?)
}
