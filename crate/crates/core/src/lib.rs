//! Fast exact and approximate max-kernel search.
//!
//! Points (dense vectors or byte strings) are indexed with a cover tree built
//! purely from kernel evaluations, in the metric the kernel induces on its
//! feature space. Queries return the top-k points by kernel value using
//! branch-and-bound over the tree; every kernel evaluation is counted so the
//! speedup over a linear scan can be measured exactly.

pub mod cover_tree;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod kernels;
pub mod persist;
pub mod run;
pub mod search;
pub mod sharded;

pub use cover_tree::{CoverNode, CoverTree, TreeStats, ValidationReport, DEFAULT_BASE};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use kernels::{EvalCounter, Kernel, KernelKind, Point, PreparedPoint};
pub use search::{fastmks, linear_scan, Hit, Mode, QueryResult, SearchConfig};
pub use sharded::ShardedIndex;
