//! End-to-end workflows behind the service and the CLI: build an index, run
//! a query batch with optional oracle verification, benchmark speedups on
//! nested reference sets, and compute hardness diagnostics.
//!
//! Reports are deterministic: queries fan out over a thread pool but results
//! are collected in query order and nothing time-dependent is recorded.

use std::sync::Arc;

use fastmks_api as api;
use rayon::prelude::*;

use crate::cover_tree::{CoverTree, TreeStats};
use crate::dataset::Dataset;
use crate::diagnostics::{hardness_report, speedup_report};
use crate::error::{Error, Result};
use crate::ingest::{generate, load_dataset, save_dataset};
use crate::kernels::{EvalCounter, Kernel};
use crate::persist::{load_index, save_index};
use crate::search::{check_query, fastmks, linear_scan, Mode, QueryResult, SearchConfig};
use crate::sharded::ShardedIndex;

pub fn resolve(source: &api::DataSource) -> Result<Dataset> {
    match source {
        api::DataSource::File { path } => load_dataset(path),
        api::DataSource::Generated(spec) => generate(spec),
        api::DataSource::Inline(points) => inline_dataset(points),
    }
}

pub fn inline_dataset(points: &api::InlinePoints) -> Result<Dataset> {
    match points {
        api::InlinePoints::Vectors(rows) => Dataset::from_vectors(rows.clone()),
        api::InlinePoints::Sequences(seqs) => Dataset::from_sequences(seqs.iter().map(|s| s.as_bytes().to_vec()).collect()),
    }
}

pub fn dataset_info(ds: &Dataset) -> api::DatasetInfo {
    api::DatasetInfo {
        n: ds.len(),
        dim: ds.dim(),
        kind: if ds.is_sequences() { "sequences" } else { "vectors" }.into(),
        fingerprint: ds.fingerprint(),
    }
}

pub fn tree_summary(s: &TreeStats) -> api::TreeSummary {
    api::TreeSummary {
        node_count: s.node_count,
        leaf_count: s.leaf_count,
        depth: s.depth,
        max_children: s.max_children,
        duplicates: s.duplicates,
        root_scale: s.root_scale,
        construction_evals: s.construction_evals,
    }
}

pub fn query_record(query: usize, r: &QueryResult) -> api::QueryRecord {
    api::QueryRecord {
        query,
        hits: r.hits.iter().map(|h| api::Hit { index: h.index, value: h.value }).collect(),
        kernel_evals: r.kernel_evals,
        nodes_visited: r.nodes_visited,
        nodes_pruned: r.nodes_pruned,
        duplicates_examined: r.duplicates_examined,
        approximated: r.approximated,
        guarantee_void: r.guarantee_void,
    }
}

pub fn generate_file(req: &api::GenerateRequest) -> Result<api::GenerateResponse> {
    let ds = generate(&req.spec)?;
    save_dataset(&ds, &req.path)?;
    Ok(api::GenerateResponse { path: req.path.clone(), dataset: dataset_info(&ds) })
}

fn check_base(base: f64) -> Result<()> {
    if base > 1.0 && base.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tree base must be > 1, got {base}")))
    }
}

pub fn build(spec: &api::BuildSpec) -> Result<api::BuildReport> {
    let kernel: Kernel = spec.kernel.parse()?;
    check_base(spec.base)?;
    let mut sk = EvalCounter::new();
    let ds = resolve(&spec.reference)?.with_self_kernels(&kernel, &mut sk)?;
    let info = dataset_info(&ds);
    let tree = CoverTree::construct(Arc::new(ds), kernel, spec.base, &mut EvalCounter::new())?;
    save_index(&tree, &spec.output)?;
    let validation = tree
        .validate_invariants()
        .checks
        .into_iter()
        .map(|c| api::InvariantResult { name: c.name.into(), passed: c.passed, first_failure: c.first_failure })
        .collect();
    Ok(api::BuildReport {
        output: spec.output.clone(),
        kernel: kernel.to_string(),
        base: spec.base,
        dataset: info,
        self_kernel_evals: sk.count(),
        tree: tree_summary(&tree.stats()),
        validation,
    })
}

/// Builds a tree over `reference`, or loads one from `index`.
pub fn open_tree(reference: Dataset, kernel: Kernel, base: f64, index: Option<&str>) -> Result<CoverTree> {
    let mut counter = EvalCounter::new();
    match index {
        Some(path) => {
            let tree = load_index(path, reference, &mut counter)?;
            if *tree.kernel() != kernel {
                return Err(Error::IndexMismatch(format!("index uses kernel {}, requested {kernel}", tree.kernel())));
            }
            Ok(tree)
        }
        None => {
            check_base(base)?;
            let ds = reference.with_self_kernels(&kernel, &mut counter)?;
            CoverTree::construct(Arc::new(ds), kernel, base, &mut counter)
        }
    }
}

/// Runs every query of `queries` against `tree`, in parallel, in order.
pub fn search_batch(tree: &CoverTree, queries: &Dataset, config: &SearchConfig) -> Result<Vec<QueryResult>> {
    let queries = queries.clone().prepare_for(tree.kernel())?;
    (0..queries.len())
        .into_par_iter()
        .map(|i| fastmks(tree, queries.point(i), config, &mut EvalCounter::new()))
        .collect()
}

enum Engine {
    Tree(CoverTree),
    Sharded(ShardedIndex),
    /// Fallback when the kernel is not PSD on the data.
    Scan(Arc<Dataset>),
}

pub fn run(spec: &api::RunSpec) -> Result<api::RunReport> {
    let kernel: Kernel = spec.kernel.parse()?;
    let mode: Mode = spec.mode.parse()?;
    check_base(spec.base)?;
    let config = SearchConfig { k: spec.k, mode, parent_distance_prune: spec.parent_distance_prune };
    let mut warnings = Vec::new();

    let raw = resolve(&spec.reference)?;
    let n = raw.len();
    if spec.k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if spec.k > n {
        return Err(Error::KExceedsN { k: spec.k, n });
    }
    mode.validate()?;
    let queries = match &spec.queries {
        Some(q) => resolve(q)?,
        None => raw.clone(),
    }
    .prepare_for(&kernel)?;
    let info = dataset_info(&raw);

    let mut sk = EvalCounter::new();
    let reference = raw.clone().with_self_kernels(&kernel, &mut sk)?;
    check_query(&reference, &kernel, queries.point(0), spec.k)?;

    let engine = match (&spec.index, spec.shards) {
        (Some(_), m) if m > 1 => {
            return Err(Error::InvalidParameter("persisted indexes hold a single tree; use shards = 1".into()))
        }
        (Some(path), _) => Engine::Tree(open_tree(reference.clone(), kernel, spec.base, Some(path))?),
        (None, 1) => {
            let shared = Arc::new(reference.clone());
            match CoverTree::construct(shared.clone(), kernel, spec.base, &mut EvalCounter::new()) {
                Ok(tree) => Engine::Tree(tree),
                Err(e @ Error::NonPsd { .. }) => {
                    warnings.push(format!("{e}; kernel is not PSD on this data, answering by linear scan"));
                    Engine::Scan(shared)
                }
                Err(e) => return Err(e),
            }
        }
        (None, m) => Engine::Sharded(ShardedIndex::build(
            Arc::new(raw.clone()),
            kernel,
            m,
            spec.base,
            spec.partitioner,
            spec.seed,
            &mut EvalCounter::new(),
        )?),
    };

    let outcomes: Vec<(QueryResult, Option<api::ShardCost>)> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let q = queries.point(i);
            let mut counter = EvalCounter::new();
            match &engine {
                Engine::Tree(t) => Ok((fastmks(t, q, &config, &mut counter)?, None)),
                Engine::Sharded(s) => s.search(q, &config, &mut counter).map(|(r, c)| (r, Some(c))),
                Engine::Scan(ds) => Ok((linear_scan(ds, &kernel, q, spec.k, &mut counter)?, None)),
            }
        })
        .collect::<Result<_>>()?;

    let verification = if spec.verify { Some(verify(&reference, &kernel, &queries, &config, &outcomes)?) } else { None };
    let hardness = match &spec.hardness {
        Some(h) => Some(hardness_report(&reference, h.direction_samples, h.interval_samples, h.cap, spec.seed, &mut EvalCounter::new())?),
        None => None,
    };

    let (tree, construction_evals, shard_summary) = match &engine {
        Engine::Tree(t) => (Some(tree_summary(&t.stats())), t.construction_evals(), None),
        Engine::Sharded(s) => {
            let costs: Vec<&api::ShardCost> = outcomes.iter().filter_map(|o| o.1.as_ref()).collect();
            (None, s.construction_evals(), Some(shard_summary(s, &costs)))
        }
        Engine::Scan(_) => (None, 0, None),
    };
    let shard_costs = shard_summary.as_ref().map(|_| outcomes.iter().filter_map(|o| o.1.clone()).collect());

    let q = outcomes.len();
    let total: u64 = outcomes.iter().map(|o| o.0.kernel_evals).sum();
    let aggregates = api::Aggregates {
        queries: q,
        total_kernel_evals: total,
        mean_kernel_evals: total as f64 / q as f64,
        linear_scan_evals: (q * n) as u64,
        speedup: speedup_report(n, &outcomes.iter().map(|o| (spec.k, o.0.kernel_evals)).collect::<Vec<_>>(), 0).speedup,
        self_kernel_evals: sk.count(),
        construction_evals,
        nodes_visited: outcomes.iter().map(|o| o.0.nodes_visited).sum(),
        nodes_pruned: outcomes.iter().map(|o| o.0.nodes_pruned).sum(),
    };
    let void = outcomes.iter().filter(|o| o.0.guarantee_void).count();
    if void > 0 {
        warnings.push(format!("{void} queries have a non-positive best value; the relative guarantee does not apply to them"));
    }

    Ok(api::RunReport {
        schema: api::REPORT_SCHEMA.into(),
        passed: verification.as_ref().is_none_or(|v| v.passed),
        config: api::RunConfigEcho {
            kernel: kernel.to_string(),
            mode: mode.to_string(),
            guarantee: mode.guarantee(),
            k: spec.k,
            base: spec.base,
            shards: spec.shards,
            partitioner: spec.partitioner,
            seed: spec.seed,
            parent_distance_prune: spec.parent_distance_prune,
            index_loaded: spec.index.is_some(),
        },
        reference: info,
        tree,
        aggregates,
        verification,
        hardness,
        shard_summary,
        shard_costs,
        warnings,
        results: outcomes.iter().enumerate().map(|(i, o)| query_record(i, &o.0)).collect(),
    })
}

fn shard_summary(index: &ShardedIndex, costs: &[&api::ShardCost]) -> api::ShardSummary {
    let q = costs.len().max(1) as f64;
    api::ShardSummary {
        m: index.m(),
        shard_sizes: index.shards().iter().map(|t| t.dataset().len()).collect(),
        mean_max_shard_evals: costs.iter().map(|c| c.max_shard_evals as f64).sum::<f64>() / q,
        mean_total_evals: costs.iter().map(|c| c.total_evals as f64).sum::<f64>() / q,
        mean_parallel_cost: costs.iter().map(|c| c.parallel_cost as f64).sum::<f64>() / q,
        total_merge_items: costs.iter().map(|c| c.merge_items).sum(),
    }
}

/// Compares each result against the linear-scan oracle under the mode's
/// contract.
fn verify(
    reference: &Dataset,
    kernel: &Kernel,
    queries: &Dataset,
    config: &SearchConfig,
    outcomes: &[(QueryResult, Option<api::ShardCost>)],
) -> Result<api::Verification> {
    let n = reference.len();
    let oracle_k = if matches!(config.mode, Mode::Ra { .. }) { n } else { config.k };
    let verdicts: Vec<(bool, bool)> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let oracle = linear_scan(reference, kernel, queries.point(i), oracle_k, &mut EvalCounter::new())?;
            let hits = &outcomes[i].0.hits;
            Ok(match config.mode {
                Mode::Exact => (hits == &oracle.hits, false),
                Mode::Ava { eps } => (hits.iter().zip(&oracle.hits).all(|(h, o)| h.value >= o.value - eps), false),
                Mode::Rva { eps } => {
                    let ok = hits.iter().zip(&oracle.hits).all(|(h, o)| o.value <= 0.0 || h.value >= (1.0 - eps) * o.value);
                    (ok, false)
                }
                Mode::Ra { tau, .. } => {
                    let top = hits[0].value;
                    let rank = 1 + oracle.hits.iter().take_while(|o| o.value > top).count();
                    (true, rank > tau)
                }
            })
        })
        .collect::<Result<_>>()?;
    let first = verdicts.iter().position(|v| !v.0);
    let mismatches = verdicts.iter().filter(|v| !v.0).count();
    Ok(api::Verification {
        checked: verdicts.len(),
        mismatches,
        first_mismatch: first,
        rank_failures: matches!(config.mode, Mode::Ra { .. }).then(|| verdicts.iter().filter(|v| v.1).count()),
        passed: mismatches == 0,
    })
}

pub fn diagnose(spec: &api::DiagnoseSpec) -> Result<api::HardnessReport> {
    let kernel: Kernel = spec.kernel.parse()?;
    let ds = resolve(&spec.reference)?.with_self_kernels(&kernel, &mut EvalCounter::new())?;
    let h = &spec.hardness;
    hardness_report(&ds, h.direction_samples, h.interval_samples, h.cap, spec.seed, &mut EvalCounter::new())
}

/// Speedups on nested prefixes of one generated corpus. The query pool is
/// drawn after the largest reference set, from the same distribution.
pub fn bench(spec: &api::BenchSpec) -> Result<api::BenchReport> {
    let kernel: Kernel = spec.kernel.parse()?;
    let mode: Mode = spec.mode.parse()?;
    mode.validate()?;
    check_base(spec.base)?;
    let largest = *spec.sizes.iter().max().ok_or_else(|| Error::InvalidParameter("no reference sizes".into()))?;
    if spec.queries == 0 || spec.ks.is_empty() || spec.ks.contains(&0) {
        return Err(Error::InvalidParameter("need at least one query and ks >= 1".into()));
    }
    let mut sizes = spec.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    let corpus = generate(&api::GenerateSpec { n: largest + spec.queries, ..spec.corpus.clone() })?;
    let queries = corpus.subset(&(largest..largest + spec.queries).collect::<Vec<_>>()).prepare_for(&kernel)?;

    let mut speedups = Vec::new();
    let mut construction = Vec::new();
    let mut csv = String::from("n,k,queries,mean_kernel_evals,speedup\n");
    for &n in &sizes {
        if spec.ks.iter().any(|&k| k > n) {
            return Err(Error::KExceedsN { k: *spec.ks.iter().max().unwrap(), n });
        }
        let prefix = corpus.subset(&(0..n).collect::<Vec<_>>());
        let tree = open_tree(prefix, kernel, spec.base, None)?;
        let mut records = Vec::new();
        for &k in &spec.ks {
            let config = SearchConfig::with_mode(k, mode);
            records.extend(search_batch(&tree, &queries, &config)?.iter().map(|r| (k, r.kernel_evals)));
        }
        let report = speedup_report(n, &records, tree.construction_evals());
        for row in &report.per_k {
            csv.push_str(&format!("{},{},{},{},{}\n", row.n, row.k, row.queries, row.mean_kernel_evals, row.speedup));
        }
        speedups.push(report);
        construction.push(api::ConstructionRow {
            n,
            construction_evals: tree.construction_evals(),
            n_log_n_ratio: tree.construction_evals() as f64 / (n as f64 * (n as f64).ln()),
            tree: tree_summary(&tree.stats()),
        });
    }

    let mut shards = Vec::new();
    if !spec.shards.is_empty() {
        let reference = Arc::new(corpus.subset(&(0..largest).collect::<Vec<_>>()));
        let config = SearchConfig::with_mode(spec.ks[0], mode);
        for &m in &spec.shards {
            let index = ShardedIndex::build(
                reference.clone(),
                kernel,
                m,
                spec.base,
                api::Partitioner::RoundRobin,
                spec.corpus.seed,
                &mut EvalCounter::new(),
            )?;
            let costs: Vec<api::ShardCost> = (0..queries.len())
                .into_par_iter()
                .map(|i| index.search(queries.point(i), &config, &mut EvalCounter::new()).map(|r| r.1))
                .collect::<Result<_>>()?;
            shards.push(shard_summary(&index, &costs.iter().collect::<Vec<_>>()));
        }
    }

    Ok(api::BenchReport {
        schema: api::REPORT_SCHEMA.into(),
        kernel: kernel.to_string(),
        mode: mode.to_string(),
        base: spec.base,
        speedups,
        construction,
        shards,
        csv,
    })
}
