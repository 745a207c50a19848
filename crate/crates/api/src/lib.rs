//! JSON wire types shared by the fastmks service, its client and the CLI.
//!
//! Field names are camelCase on the wire. Reports contain no timestamps or
//! wall-clock measurements, so identical inputs serialize to identical bytes.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "fastmks-report/1";
pub const DEFAULT_KERNEL: &str = "linear";
pub const DEFAULT_MODE: &str = "exact";
pub const DEFAULT_BASE: f64 = 1.3;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DIAGNOSTIC_CAP: usize = 5000;

/// Where a point set comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "camelCase")]
pub enum DataSource {
    /// A CSV/TSV vector file or a FASTA file, read by the server.
    File { path: String },
    /// A seeded synthetic corpus.
    Generated(GenerateSpec),
    /// Points sent inline.
    Inline(InlinePoints),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InlinePoints {
    Vectors(Vec<Vec<f64>>),
    Sequences(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Corpus {
    /// Uniform in the unit cube.
    Cube,
    /// Mixture of isotropic gaussians.
    Mixture,
    /// Uniform on the unit sphere.
    Sphere,
    /// Random strings over the 20 amino-acid letters.
    Sequences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateSpec {
    pub corpus: Corpus,
    pub n: usize,
    /// Vector dimension; ignored for sequences.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Mixture components.
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Sequence lengths are drawn uniformly from `minLength..=maxLength`.
    #[serde(default = "default_min_length")]
    pub min_length: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl GenerateSpec {
    pub fn new(corpus: Corpus, n: usize, dim: usize, seed: u64) -> Self {
        GenerateSpec {
            corpus,
            n,
            dim,
            clusters: default_clusters(),
            min_length: default_min_length(),
            max_length: default_max_length(),
            seed,
        }
    }
}

fn default_dim() -> usize {
    8
}
fn default_clusters() -> usize {
    20
}
fn default_min_length() -> usize {
    40
}
fn default_max_length() -> usize {
    80
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_kernel() -> String {
    DEFAULT_KERNEL.into()
}
fn default_mode() -> String {
    DEFAULT_MODE.into()
}
fn default_base() -> f64 {
    DEFAULT_BASE
}
fn default_k() -> usize {
    1
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_cap() -> usize {
    DEFAULT_DIAGNOSTIC_CAP
}
fn default_direction_samples() -> usize {
    16
}
fn default_interval_samples() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateRequest {
    pub spec: GenerateSpec,
    /// Output file; `.fa`/`.fasta` for sequences, CSV otherwise.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateResponse {
    pub path: String,
    pub dataset: DatasetInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetInfo {
    pub n: usize,
    /// `None` for string data.
    pub dim: Option<usize>,
    pub kind: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Partitioner {
    #[default]
    RoundRobin,
    /// Round-robin over a seeded random permutation.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuildSpec {
    pub reference: DataSource,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_base")]
    pub base: f64,
    /// Where to write the index file.
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuildReport {
    pub output: String,
    pub kernel: String,
    pub base: f64,
    pub dataset: DatasetInfo,
    pub self_kernel_evals: u64,
    pub tree: TreeSummary,
    pub validation: Vec<InvariantResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TreeSummary {
    pub node_count: usize,
    pub leaf_count: usize,
    pub depth: usize,
    pub max_children: usize,
    pub duplicates: usize,
    pub root_scale: Option<i32>,
    pub construction_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardnessSpec {
    #[serde(default = "default_direction_samples")]
    pub direction_samples: usize,
    #[serde(default = "default_interval_samples")]
    pub interval_samples: usize,
    /// Largest n for which the exhaustive expansion constant is computed.
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl Default for HardnessSpec {
    fn default() -> Self {
        HardnessSpec {
            direction_samples: default_direction_samples(),
            interval_samples: default_interval_samples(),
            cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSpec {
    pub reference: DataSource,
    /// Defaults to querying with every reference point.
    #[serde(default)]
    pub queries: Option<DataSource>,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_one")]
    pub shards: usize,
    #[serde(default)]
    pub partitioner: Partitioner,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Compare every query against the linear-scan oracle.
    #[serde(default)]
    pub verify: bool,
    /// Load this index instead of building one.
    #[serde(default)]
    pub index: Option<String>,
    #[serde(default = "default_true")]
    pub parent_distance_prune: bool,
    #[serde(default)]
    pub hardness: Option<HardnessSpec>,
}

impl RunSpec {
    pub fn new(reference: DataSource) -> Self {
        RunSpec {
            reference,
            queries: None,
            kernel: default_kernel(),
            mode: default_mode(),
            k: 1,
            base: DEFAULT_BASE,
            shards: 1,
            partitioner: Partitioner::RoundRobin,
            seed: DEFAULT_SEED,
            verify: false,
            index: None,
            parent_distance_prune: true,
            hardness: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryRecord {
    pub query: usize,
    pub hits: Vec<Hit>,
    pub kernel_evals: u64,
    pub nodes_visited: u64,
    pub nodes_pruned: u64,
    pub duplicates_examined: u64,
    pub approximated: bool,
    pub guarantee_void: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfigEcho {
    pub kernel: String,
    pub mode: String,
    pub guarantee: String,
    pub k: usize,
    pub base: f64,
    pub shards: usize,
    pub partitioner: Partitioner,
    pub seed: u64,
    pub parent_distance_prune: bool,
    pub index_loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Aggregates {
    pub queries: usize,
    pub total_kernel_evals: u64,
    pub mean_kernel_evals: f64,
    pub linear_scan_evals: u64,
    pub speedup: f64,
    pub self_kernel_evals: u64,
    pub construction_evals: u64,
    pub nodes_visited: u64,
    pub nodes_pruned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verification {
    pub checked: usize,
    /// Queries whose result broke the mode's contract: any difference from
    /// the oracle in exact mode, a value below the guarantee for AVA/RVA.
    pub mismatches: usize,
    pub first_mismatch: Option<usize>,
    /// Queries whose top hit ranks worse than `tau` (rank mode only).
    pub rank_failures: Option<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardnessReport {
    /// `None` when n exceeds the cap.
    pub expansion_constant: Option<f64>,
    pub gamma_estimate: f64,
    pub gamma_method: String,
    pub direction_samples: usize,
    pub interval_samples: usize,
    pub dataset_fingerprint: String,
    pub kernel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShardCost {
    pub m: usize,
    pub per_shard_evals: Vec<u64>,
    pub max_shard_evals: u64,
    pub total_evals: u64,
    pub merge_items: usize,
    /// `maxShardEvals + m`: slowest shard plus the master's merge.
    pub parallel_cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShardSummary {
    pub m: usize,
    pub shard_sizes: Vec<usize>,
    pub mean_max_shard_evals: f64,
    pub mean_total_evals: f64,
    pub mean_parallel_cost: f64,
    pub total_merge_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub schema: String,
    pub passed: bool,
    pub config: RunConfigEcho,
    pub reference: DatasetInfo,
    pub tree: Option<TreeSummary>,
    pub aggregates: Aggregates,
    pub verification: Option<Verification>,
    pub hardness: Option<HardnessReport>,
    pub shard_summary: Option<ShardSummary>,
    pub shard_costs: Option<Vec<ShardCost>>,
    pub warnings: Vec<String>,
    pub results: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnoseSpec {
    pub reference: DataSource,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default)]
    pub hardness: HardnessSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchSpec {
    /// The largest reference set plus the query pool are drawn from this
    /// generator; `n` is ignored.
    pub corpus: GenerateSpec,
    /// Nested reference sizes; each is a prefix of the next.
    pub sizes: Vec<usize>,
    pub queries: usize,
    #[serde(default = "default_bench_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_base")]
    pub base: f64,
    /// Shard counts to cost on the largest reference set.
    #[serde(default)]
    pub shards: Vec<usize>,
}

fn default_bench_ks() -> Vec<usize> {
    vec![1, 2, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeedupRow {
    pub n: usize,
    pub k: usize,
    pub queries: usize,
    pub mean_kernel_evals: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConstructionRow {
    pub n: usize,
    pub construction_evals: u64,
    /// `constructionEvals / (n ln n)`.
    pub n_log_n_ratio: f64,
    pub tree: TreeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeedupReport {
    pub n: usize,
    pub queries: usize,
    pub total_kernel_evals: u64,
    pub speedup: f64,
    pub per_k: Vec<SpeedupRow>,
    pub construction_evals: u64,
    /// Speedup once construction is charged to this batch.
    pub amortized_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub schema: String,
    pub kernel: String,
    pub mode: String,
    pub base: f64,
    pub speedups: Vec<SpeedupReport>,
    pub construction: Vec<ConstructionRow>,
    pub shards: Vec<ShardSummary>,
    /// One row per `(n, k)`, for plotting.
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreateIndexRequest {
    pub reference: DataSource,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_base")]
    pub base: f64,
    /// Load a persisted index for `reference` instead of building.
    #[serde(default)]
    pub index: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexInfo {
    pub id: u64,
    pub kernel: String,
    pub base: f64,
    pub dataset: DatasetInfo,
    pub tree: TreeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchRequest {
    pub queries: InlinePoints,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchResponse {
    pub results: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}
