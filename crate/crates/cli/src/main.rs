//! `fastmks` command-line tool.
//!
//! Every subcommand except `serve` is a request to a fastmks service: the one
//! named by `--server`, or an in-process server started for the invocation.
//! File paths are resolved by the server.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fastmks_api as api;
use fastmks_client::Client;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fastmks", version, about = "Exact and approximate max-kernel search over cover trees")]
struct Cli {
    /// Service root URL; without it an in-process server is used.
    #[arg(long, global = true, env = "FASTMKS_SERVER")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus to a CSV or FASTA file.
    Generate(GenerateArgs),
    /// Build a cover tree and save it as an index file.
    Build(BuildArgs),
    /// Run a query batch and emit a JSON report.
    Query(QueryArgs),
    /// Measure speedups over linear scan on nested synthetic sets.
    Bench(BenchArgs),
    /// Compute dataset hardness measures.
    Diagnose(DiagnoseArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusArg {
    Cube,
    Mixture,
    Sphere,
    Sequences,
}

impl From<CorpusArg> for api::Corpus {
    fn from(c: CorpusArg) -> Self {
        match c {
            CorpusArg::Cube => api::Corpus::Cube,
            CorpusArg::Mixture => api::Corpus::Mixture,
            CorpusArg::Sphere => api::Corpus::Sphere,
            CorpusArg::Sequences => api::Corpus::Sequences,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionerArg {
    RoundRobin,
    Shuffled,
}

#[derive(Args)]
struct CorpusOpts {
    #[arg(long, value_enum, default_value = "mixture")]
    corpus: CorpusArg,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    clusters: usize,
    #[arg(long, default_value_t = 40)]
    min_length: usize,
    #[arg(long, default_value_t = 80)]
    max_length: usize,
    #[arg(long, default_value_t = api::DEFAULT_SEED)]
    seed: u64,
}

impl CorpusOpts {
    fn spec(&self, n: usize) -> api::GenerateSpec {
        api::GenerateSpec {
            corpus: self.corpus.into(),
            n,
            dim: self.dim,
            clusters: self.clusters,
            min_length: self.min_length,
            max_length: self.max_length,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    corpus: CorpusOpts,
    #[arg(long, short)]
    n: usize,
    /// `.fa`/`.fasta` for sequences, `.csv` or `.tsv` for vectors.
    #[arg(long, short)]
    out: String,
}

#[derive(Args)]
struct BuildArgs {
    /// CSV/TSV vectors or FASTA sequences.
    #[arg(long, short)]
    reference: String,
    #[arg(long, short = 'K', default_value = api::DEFAULT_KERNEL)]
    kernel: String,
    #[arg(long, default_value_t = api::DEFAULT_BASE)]
    base: f64,
    #[arg(long, short)]
    out: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct HardnessOpts {
    #[arg(long, default_value_t = 16)]
    direction_samples: usize,
    #[arg(long, default_value_t = 32)]
    interval_samples: usize,
    /// Largest n for the exhaustive expansion constant.
    #[arg(long, default_value_t = api::DEFAULT_DIAGNOSTIC_CAP)]
    cap: usize,
}

impl HardnessOpts {
    fn spec(&self) -> api::HardnessSpec {
        api::HardnessSpec { direction_samples: self.direction_samples, interval_samples: self.interval_samples, cap: self.cap }
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, short)]
    reference: String,
    /// Query points; defaults to the reference points.
    #[arg(long, short)]
    queries: Option<String>,
    /// e.g. `linear`, `polynomial:d=10,c=1`, `cosine`, `gaussian:sigma=1.0`,
    /// `tanh:s=1.0,c=0.0`, `pspectrum:p=3`.
    #[arg(long, short = 'K', default_value = api::DEFAULT_KERNEL)]
    kernel: String,
    /// `exact`, `ava:eps=0.01`, `rva:eps=0.1` or `ra:tau=100,delta=0.05`.
    #[arg(long, short, default_value = api::DEFAULT_MODE)]
    mode: String,
    #[arg(long, short, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = api::DEFAULT_BASE)]
    base: f64,
    #[arg(long, default_value_t = 1)]
    shards: usize,
    #[arg(long, value_enum, default_value = "round-robin")]
    partitioner: PartitionerArg,
    #[arg(long, default_value_t = api::DEFAULT_SEED)]
    seed: u64,
    /// Check every query against a linear scan; mismatches fail the run.
    #[arg(long)]
    verify: bool,
    /// Use this index file instead of building a tree.
    #[arg(long)]
    index: Option<String>,
    /// Disable the parent-distance pruning shortcut.
    #[arg(long)]
    no_parent_prune: bool,
    /// Add the hardness report.
    #[arg(long)]
    hardness: bool,
    #[command(flatten)]
    hardness_opts: HardnessOpts,
    /// JSON report destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// One-row CSV summary.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    corpus: CorpusOpts,
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000, 8000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 5, 10])]
    ks: Vec<usize>,
    #[arg(long, short = 'K', default_value = api::DEFAULT_KERNEL)]
    kernel: String,
    #[arg(long, short, default_value = api::DEFAULT_MODE)]
    mode: String,
    #[arg(long, default_value_t = api::DEFAULT_BASE)]
    base: f64,
    /// Shard counts to cost on the largest set.
    #[arg(long, value_delimiter = ',')]
    shards: Vec<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, short)]
    reference: String,
    #[arg(long, short = 'K', default_value = api::DEFAULT_KERNEL)]
    kernel: String,
    #[command(flatten)]
    hardness: HardnessOpts,
    #[arg(long, default_value_t = api::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

fn emit<T: Serialize>(value: &T, output: Option<&PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

async fn connect(server: Option<String>) -> Result<Client> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => {
            let (addr, _handle) = fastmks_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
                .await
                .context("starting in-process server")?;
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

/// Runs one subcommand; `Ok(false)` means the command ran but its result
/// did not pass (a verification mismatch).
async fn dispatch(cli: Cli) -> Result<bool> {
    if let Command::Serve(args) = &cli.command {
        let listener = tokio::net::TcpListener::bind(args.addr).await.with_context(|| format!("binding {}", args.addr))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        fastmks_service::serve(listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        return Ok(true);
    }
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Generate(a) => {
            let resp = client.generate(&api::GenerateRequest { spec: a.corpus.spec(a.n), path: a.out }).await?;
            emit(&resp, None)?;
        }
        Command::Build(a) => {
            let spec = api::BuildSpec {
                reference: api::DataSource::File { path: a.reference },
                kernel: a.kernel,
                base: a.base,
                output: a.out,
            };
            let report = client.build(&spec).await?;
            emit(&report, a.output.as_ref())?;
            if report.validation.iter().any(|c| !c.passed) {
                eprintln!("warning: the built tree fails invariant checks");
                return Ok(false);
            }
        }
        Command::Query(a) => {
            let spec = api::RunSpec {
                reference: api::DataSource::File { path: a.reference },
                queries: a.queries.map(|path| api::DataSource::File { path }),
                kernel: a.kernel,
                mode: a.mode,
                k: a.k,
                base: a.base,
                shards: a.shards,
                partitioner: match a.partitioner {
                    PartitionerArg::RoundRobin => api::Partitioner::RoundRobin,
                    PartitionerArg::Shuffled => api::Partitioner::Shuffled,
                },
                seed: a.seed,
                verify: a.verify,
                index: a.index,
                parent_distance_prune: !a.no_parent_prune,
                hardness: a.hardness.then(|| a.hardness_opts.spec()),
            };
            let report = client.run(&spec).await?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&report, a.output.as_ref())?;
            if let Some(path) = &a.csv {
                let g = &report.aggregates;
                let csv = format!(
                    "n,k,queries,mean_kernel_evals,speedup\n{},{},{},{},{}\n",
                    report.reference.n, report.config.k, g.queries, g.mean_kernel_evals, g.speedup
                );
                write_file(path, &csv)?;
            }
            if let Some(v) = report.verification.as_ref().filter(|v| !v.passed) {
                eprintln!(
                    "verification failed: {} of {} queries broke the {} contract (first: query {})",
                    v.mismatches,
                    v.checked,
                    report.config.mode,
                    v.first_mismatch.unwrap_or_default()
                );
                return Ok(false);
            }
        }
        Command::Bench(a) => {
            let spec = api::BenchSpec {
                corpus: a.corpus.spec(0),
                sizes: a.sizes,
                queries: a.queries,
                ks: a.ks,
                kernel: a.kernel,
                mode: a.mode,
                base: a.base,
                shards: a.shards,
            };
            let report = client.bench(&spec).await?;
            emit(&report, a.output.as_ref())?;
            if let Some(path) = &a.csv {
                write_file(path, &report.csv)?;
            }
        }
        Command::Diagnose(a) => {
            let spec = api::DiagnoseSpec {
                reference: api::DataSource::File { path: a.reference },
                kernel: a.kernel,
                hardness: a.hardness.spec(),
                seed: a.seed,
            };
            emit(&client.diagnose(&spec).await?, a.output.as_ref())?;
        }
        Command::Serve(_) => unreachable!("handled above"),
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
