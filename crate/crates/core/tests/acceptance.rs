//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::sync::{Arc, Mutex};

use fastmks::cover_tree::CoverTree;
use fastmks::diagnostics::speedup_report;
use fastmks::ingest::generate;
use fastmks::persist::{load_index, save_index};
use fastmks::run::{run, search_batch};
use fastmks::search::{bound_general, bound_normalized, fastmks, linear_scan, ra_sample_count, Mode, SearchConfig};
use fastmks::sharded::ShardedIndex;
use fastmks::{Dataset, EvalCounter, Kernel};
use fastmks_api::{Corpus, DataSource, GenerateSpec, HardnessSpec, Partitioner, RunSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const VECTOR_KERNELS: [&str; 4] = ["linear", "polynomial:d=10,c=1", "cosine", "gaussian:sigma=1"];
const KS: [usize; 4] = [1, 2, 5, 10];
const NESTED: [usize; 4] = [1000, 2000, 4000, 8000];
/// Largest acceptable spread `max C / min C` of the construction constant
/// `evals / (n ln n)` over the nested sets.
const C_SPREAD: f64 = 1.5;

/// Every tree built anywhere in the suite: (label, n, nodes, invariants ok).
type TreeRecord = (String, usize, usize, Option<String>);

static TREES: Mutex<Vec<TreeRecord>> = Mutex::new(Vec::new());

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `n` reference points followed by `q` queries from one generator.
fn corpus(kind: Corpus, n: usize, q: usize, dim: usize, seed: u64) -> (Dataset, Dataset) {
    let all = generate(&GenerateSpec::new(kind, n + q, dim, seed)).unwrap();
    let refs = all.subset(&(0..n).collect::<Vec<_>>());
    let queries = all.subset(&(n..n + q).collect::<Vec<_>>());
    (refs, queries)
}

fn build(label: &str, refs: &Dataset, kernel: Kernel) -> CoverTree {
    let ds = refs.clone().with_self_kernels(&kernel, &mut EvalCounter::new()).unwrap();
    let tree = CoverTree::construct(Arc::new(ds), kernel, 1.3, &mut EvalCounter::new()).unwrap();
    record(label, &tree);
    tree
}

fn record(label: &str, tree: &CoverTree) {
    let report = tree.validate_invariants();
    let failure = report.checks.iter().find(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.first_failure.clone().unwrap_or_default()));
    TREES.lock().unwrap().push((label.to_string(), tree.dataset().len(), tree.nodes().len(), failure));
}

fn criterion_exactness() -> Outcome {
    let q = 150;
    let mut sets = vec![
        ("uniform R^3", corpus(Corpus::Cube, 2000, q, 3, 11), false),
        ("clustered R^8", corpus(Corpus::Mixture, 2000, q, 8, 12), false),
        ("sphere R^16", corpus(Corpus::Sphere, 2000, q, 16, 13), false),
        ("sequences", corpus(Corpus::Sequences, 1000, q, 0, 14), true),
        ("clustered 10k", corpus(Corpus::Mixture, 10_000, q, 8, 15), false),
    ];
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for (name, (refs, queries), strings) in sets.drain(..) {
        let kernels: Vec<Kernel> = if strings {
            vec!["pspectrum:p=3".parse().unwrap()]
        } else {
            VECTOR_KERNELS.iter().map(|k| k.parse().unwrap()).collect()
        };
        for kernel in kernels {
            let tree = build(&format!("{name} / {kernel}"), &refs, kernel);
            let queries = queries.clone().prepare_for(&kernel).unwrap();
            let cache = tree.dataset().clone();
            for k in KS {
                for prune in [true, false] {
                    let config = SearchConfig { k, mode: Mode::Exact, parent_distance_prune: prune };
                    let bad: Vec<usize> = (0..queries.len())
                        .into_par_iter()
                        .filter(|&i| {
                            let got = fastmks(&tree, queries.point(i), &config, &mut EvalCounter::new()).unwrap();
                            let want = linear_scan(&cache, &kernel, queries.point(i), k, &mut EvalCounter::new()).unwrap();
                            got.hits != want.hits
                        })
                        .collect();
                    checked += queries.len();
                    if let Some(&i) = bad.first() {
                        failures.push(format!("{name}/{kernel}/k={k}/prune={prune}: {} mismatches, first query {i}", bad.len()));
                    }
                }
            }
        }
    }
    let detail = format!("{} of {checked} (corpus, kernel, k, query, prune flag) cases match the oracle", checked - failures.len());
    outcome(failures.is_empty(), if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) })
}

fn criterion_bounds() -> Outcome {
    let pairs = 1500;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut violations = Vec::new();
    let mut dominance = 0usize;
    let mut total = 0usize;
    let sets = [
        ("cube", corpus(Corpus::Cube, 400, 100, 3, 22), false),
        ("mixture", corpus(Corpus::Mixture, 500, 100, 8, 23), false),
        ("sphere", corpus(Corpus::Sphere, 300, 100, 16, 24), false),
        ("sequences", corpus(Corpus::Sequences, 300, 100, 0, 25), true),
    ];
    for (name, (refs, queries), strings) in sets {
        let kernels: Vec<Kernel> = if strings {
            vec!["pspectrum:p=3".parse().unwrap()]
        } else {
            VECTOR_KERNELS.iter().map(|k| k.parse().unwrap()).collect()
        };
        for kernel in kernels {
            let tree = build(&format!("bounds {name} / {kernel}"), &refs, kernel);
            let queries = queries.clone().prepare_for(&kernel).unwrap();
            let ds = tree.dataset().clone();
            let c = &mut EvalCounter::new();
            for _ in 0..pairs {
                let qi = rng.random_range(0..queries.len());
                let node_id = rng.random_range(0..tree.nodes().len());
                let node = tree.node(node_id);
                let q = queries.point(qi);
                let kqq = kernel.eval(q, q, c).unwrap();
                let kqp = kernel.eval(q, ds.point(node.point), c).unwrap();
                let radius = node.furthest_descendant + tree.distance_slack();
                let general = bound_general(kqp, kqq, radius);
                let bound = if kernel.is_normalized() {
                    let normalized = bound_normalized(kqp, (radius / 2.0).powi(2));
                    if normalized > general + 1e-12 {
                        dominance += 1;
                    }
                    normalized
                } else {
                    general
                };
                let truth = tree
                    .subtree_points(node_id)
                    .into_iter()
                    .map(|r| kernel.eval(q, ds.point(r), c).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                total += 1;
                if truth > bound {
                    violations.push(format!("{name}/{kernel} node {node_id} query {qi}: max {truth} > bound {bound}"));
                }
            }
        }
    }
    let ok = violations.is_empty() && dominance == 0;
    let mut detail = format!("{total} (query, node) pairs: {} bound violations, {dominance} dominance violations", violations.len());
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; first: {v}"));
    }
    outcome(ok, detail)
}

fn criterion_approximation() -> Outcome {
    let q = 1000;
    let linear = Kernel::Linear;
    let (refs, queries) = corpus(Corpus::Cube, 1000, q, 5, 31);
    let tree = build("approx cube R^5", &refs, linear);
    let ds = tree.dataset().clone();
    let mut notes = Vec::new();
    let mut ok = true;

    let check = |mode: Mode, k: usize| -> (usize, usize, bool) {
        let config = SearchConfig::with_mode(k, mode);
        let rows: Vec<(bool, bool)> = (0..q)
            .into_par_iter()
            .map(|i| {
                let p = queries.point(i);
                let got = fastmks(&tree, p, &config, &mut EvalCounter::new()).unwrap();
                let want = linear_scan(&ds, &linear, p, k, &mut EvalCounter::new()).unwrap();
                let counted = match mode {
                    Mode::Rva { .. } => want.hits[0].value > 0.0,
                    _ => true,
                };
                let good = got.hits.iter().zip(&want.hits).all(|(g, w)| match mode {
                    Mode::Ava { eps } => g.value >= w.value - eps,
                    Mode::Rva { eps } => w.value <= 0.0 || g.value >= (1.0 - eps) * w.value,
                    _ => unreachable!(),
                });
                (counted, good)
            })
            .collect();
        let counted = rows.iter().filter(|r| r.0).count();
        let bad = rows.iter().filter(|r| r.0 && !r.1).count();
        (counted, bad, bad == 0 && counted > 0)
    };
    for eps in [0.01, 0.1] {
        for k in [1, 5] {
            let (n, bad, good) = check(Mode::Ava { eps }, k);
            ok &= good;
            notes.push(format!("AVA eps={eps} k={k}: {bad}/{n} below"));
        }
    }
    for eps in [0.1, 0.5] {
        for k in [1, 5] {
            let (n, bad, good) = check(Mode::Rva { eps }, k);
            ok &= good;
            notes.push(format!("RVA eps={eps} k={k}: {bad}/{n} below"));
        }
    }

    let samples = ra_sample_count(10_000, 100, 0.05).unwrap();
    ok &= samples == 299;
    notes.push(format!("sampleCount(10000,100,0.05)={samples}"));

    let (n, tau, delta) = (5000, 50, 0.1);
    let (refs, queries) = corpus(Corpus::Cube, n, q, 5, 32);
    let tree = build("rank cube R^5", &refs, linear);
    let ds = tree.dataset().clone();
    let config = SearchConfig::with_mode(1, Mode::Ra { tau, delta });
    let (fails, evals): (usize, u64) = (0..q)
        .into_par_iter()
        .map(|i| {
            let p = queries.point(i);
            let got = fastmks(&tree, p, &config, &mut EvalCounter::new()).unwrap();
            let all = linear_scan(&ds, &linear, p, n, &mut EvalCounter::new()).unwrap();
            let top = got.hits[0].value;
            let rank = 1 + all.hits.iter().take_while(|h| h.value > top).count();
            (usize::from(rank > tau), got.kernel_evals)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rate = fails as f64 / q as f64;
    let limit = delta + 0.03;
    ok &= rate <= limit;
    notes.push(format!("RA n={n} tau={tau} delta={delta}: failure rate {rate:.3} (limit {limit:.2}), mean evals {:.1}", evals as f64 / q as f64));
    outcome(ok, notes.join("; "))
}

fn criterion_efficiency() -> Outcome {
    let q = 100;
    let largest = *NESTED.last().unwrap();
    let (all, queries) = corpus(Corpus::Mixture, largest, q, 8, 41);
    let mut means: Vec<Vec<f64>> = Vec::new();
    let mut speedup_at_largest = 0.0;
    let mut ratios = Vec::new();
    for n in NESTED {
        let refs = all.subset(&(0..n).collect::<Vec<_>>());
        let tree = build(&format!("nested mixture n={n}"), &refs, Kernel::Linear);
        let mut records = Vec::new();
        for k in KS {
            let results = search_batch(&tree, &queries, &SearchConfig::exact(k)).unwrap();
            records.extend(results.iter().map(|r| (k, r.kernel_evals)));
        }
        let report = speedup_report(n, &records, tree.construction_evals());
        means.push(report.per_k.iter().map(|r| r.mean_kernel_evals).collect());
        if n == largest {
            speedup_at_largest = report.speedup;
        }
        ratios.push(tree.construction_evals() as f64 / (n as f64 * (n as f64).ln()));
    }
    let growth: Vec<f64> = means
        .windows(2)
        .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| b / a).collect::<Vec<_>>())
        .collect();
    let max_growth = growth.iter().copied().fold(0.0, f64::max);
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let sublinear = max_growth < 2.0;
    let faster = speedup_at_largest > 1.0;
    let stable = spread <= C_SPREAD;
    let detail = format!(
        "max growth per doubling {max_growth:.3} (<2: {sublinear}); speedup at n={largest} {speedup_at_largest:.2} (>1: {faster}); \
         construction C = [{}] spread {spread:.2} (<= {C_SPREAD}: {stable})",
        ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
    );
    outcome(sublinear && faster && stable, detail)
}

fn criterion_sharding() -> Outcome {
    let q = 100;
    let (refs, queries) = corpus(Corpus::Mixture, 8000, q, 8, 41);
    let kernel = Kernel::Linear;
    let single = build("sharding single tree", &refs, kernel);
    let queries = queries.prepare_for(&kernel).unwrap();
    let shared = Arc::new(refs);
    let mut ok = true;
    let mut notes = Vec::new();
    for m in [1, 2, 4, 8] {
        let index = ShardedIndex::build(shared.clone(), kernel, m, 1.3, Partitioner::RoundRobin, 0, &mut EvalCounter::new()).unwrap();
        for (s, tree) in index.shards().iter().enumerate() {
            record(&format!("shard {s} of {m}"), tree);
        }
        let sizes: usize = index.shards().iter().map(|t| t.node(t.root()).subtree_size).sum();
        let mut mismatches = 0;
        let mut unreconciled = 0;
        let mut parallel = 0u64;
        for k in [1, 10] {
            let config = SearchConfig::exact(k);
            for i in 0..queries.len() {
                let p = queries.point(i);
                let (r, cost) = index.search(p, &config, &mut EvalCounter::new()).unwrap();
                let base = fastmks(&single, p, &config, &mut EvalCounter::new()).unwrap();
                mismatches += usize::from(r.hits != base.hits);
                let sum: u64 = cost.per_shard_evals.iter().sum();
                unreconciled += usize::from(sum != cost.total_evals || cost.max_shard_evals > cost.total_evals || cost.total_evals != r.kernel_evals);
                parallel += cost.parallel_cost;
            }
        }
        ok &= mismatches == 0 && unreconciled == 0 && sizes == shared.len();
        notes.push(format!("m={m}: {mismatches} mismatches, {unreconciled} unreconciled, mean parallel cost {:.1}", parallel as f64 / (2 * q) as f64));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_determinism() -> Outcome {
    let mut spec = RunSpec::new(DataSource::Generated(GenerateSpec::new(Corpus::Mixture, 1500, 8, 51)));
    spec.queries = Some(DataSource::Generated(GenerateSpec::new(Corpus::Mixture, 200, 8, 52)));
    spec.k = 5;
    spec.verify = true;
    spec.hardness = Some(HardnessSpec::default());
    let mut notes = Vec::new();
    let mut ok = true;
    for (shards, partitioner) in [(1, Partitioner::RoundRobin), (3, Partitioner::Shuffled)] {
        spec.shards = shards;
        spec.partitioner = partitioner;
        let a = serde_json::to_vec(&run(&spec).unwrap()).unwrap();
        let b = serde_json::to_vec(&run(&spec).unwrap()).unwrap();
        ok &= a == b;
        notes.push(format!("shards={shards}: reports {} ({} bytes)", if a == b { "identical" } else { "differ" }, a.len()));
    }

    let (refs, queries) = corpus(Corpus::Sequences, 600, 100, 0, 53);
    let kernel: Kernel = "pspectrum:p=3".parse().unwrap();
    let built = build("persistence", &refs, kernel);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    save_index(&built, &path).unwrap();
    let loaded = load_index(&path, refs, &mut EvalCounter::new()).unwrap();
    record("persistence (loaded)", &loaded);
    let mut same = true;
    for k in KS {
        let config = SearchConfig::exact(k);
        let a = search_batch(&built, &queries, &config).unwrap();
        let b = search_batch(&loaded, &queries, &config).unwrap();
        same &= a.iter().zip(&b).all(|(x, y)| x.hits == y.hits && x.kernel_evals == y.kernel_evals);
    }
    ok &= same;
    notes.push(format!("save/load/query {}", if same { "matches build/query" } else { "differs" }));
    outcome(ok, notes.join("; "))
}

fn criterion_trees() -> Outcome {
    let trees = TREES.lock().unwrap();
    let invalid: Vec<_> = trees.iter().filter(|t| t.3.is_some()).collect();
    let oversized: Vec<_> = trees.iter().filter(|t| t.2 > 2 * t.1).collect();
    let mut detail = format!("{} trees: {} fail invariants, {} exceed 2n nodes", trees.len(), invalid.len(), oversized.len());
    if let Some(t) = invalid.first() {
        detail.push_str(&format!("; first: {} ({})", t.0, t.3.as_deref().unwrap_or("")));
    }
    outcome(invalid.is_empty() && oversized.is_empty() && !trees.is_empty(), detail)
}

fn main() {
    let names = [
        "exactness",
        "bound soundness",
        "tree validity",
        "approximation guarantees",
        "efficiency trend",
        "sharding",
        "determinism and persistence",
    ];
    let mut results: Vec<Option<Outcome>> = (0..7).map(|_| None).collect();
    let order: [(usize, fn() -> Outcome); 7] = [
        (0, criterion_exactness),
        (1, criterion_bounds),
        (3, criterion_approximation),
        (4, criterion_efficiency),
        (5, criterion_sharding),
        (6, criterion_determinism),
        // Runs last: it checks every tree the others built.
        (2, criterion_trees),
    ];
    for (slot, f) in order {
        let start = std::time::Instant::now();
        let o = f();
        eprintln!("  [{}] finished in {:.1?}", names[slot], start.elapsed());
        results[slot] = Some(o);
    }
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        let r = r.expect("every criterion ran");
        failed += usize::from(!r.passed);
        println!("criterion {} ({}): {} - {}", i + 1, names[i], if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
