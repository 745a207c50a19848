//! Branch-and-bound max-kernel search over a [`CoverTree`].
//!
//! The traversal is best-bound-first over the explicit tree. A node's bound
//! caps the kernel value of every point in its subtree; a node is discarded
//! when its bound falls below the current k-th best value. Approximate modes
//! only change when a node may be discarded or left unexpanded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cover_tree::{CoverTree, NodeId};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{parse_num, split_spec, EvalCounter, Kernel, Point};

/// Upper bound on `K(q, r)` for any `r` within `radius` of `p` in feature
/// space: `K(q, p) + radius * sqrt(K(q, q))` (Cauchy-Schwarz).
pub fn bound_general(kernel_qp: f64, self_kernel_q: f64, radius: f64) -> f64 {
    kernel_qp + radius * self_kernel_q.max(0.0).sqrt()
}

/// Tighter bound for normalized kernels, where every point lies on the unit
/// sphere. `scale_radius_sq` is the square of half the subtree radius, i.e.
/// `4^i` for a node at level `i` of a base-2 tree whose subtree radius is
/// `2^(i+1)`.
pub fn bound_normalized(kernel_qp: f64, scale_radius_sq: f64) -> f64 {
    if scale_radius_sq > 1.0 {
        return 1.0;
    }
    let cos_span = 1.0 - 2.0 * scale_radius_sq;
    if kernel_qp > cos_span {
        return 1.0;
    }
    let sin_qp = (1.0 - kernel_qp * kernel_qp).max(0.0);
    kernel_qp * cos_span + 2.0 * scale_radius_sq.sqrt() * (sin_qp * (1.0 - scale_radius_sq)).sqrt()
}

/// Bound for a subtree of the given feature-space radius around a point
/// with kernel value `kernel_qp`.
#[inline]
fn subtree_bound(normalized: bool, kernel_qp: f64, self_kernel_q: f64, radius: f64) -> f64 {
    if normalized {
        let half = 0.5 * radius;
        bound_normalized(kernel_qp, half * half)
    } else {
        bound_general(kernel_qp, self_kernel_q, radius)
    }
}

/// Number of samples the rank-approximate search needs so that missing all
/// of the top `tau` out of `n` has probability at most `delta`.
pub fn ra_sample_count(n: usize, tau: usize, delta: f64) -> Result<usize> {
    if tau == 0 || tau >= n {
        return Err(Error::InvalidParameter(format!("rank error tau must satisfy 1 <= tau < n (tau = {tau}, n = {n})")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("failure probability must be in (0, 1), got {delta}")));
    }
    let miss = (1.0 - tau as f64 / n as f64).ln();
    Ok(((delta.ln() / miss).ceil() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Exact,
    /// Returned values within `eps` of the exact ones.
    Ava { eps: f64 },
    /// Returned values at least `(1 - eps)` times the exact ones (when positive).
    Rva { eps: f64 },
    /// Top result within the true top `tau` with probability `1 - delta`.
    Ra { tau: usize, delta: f64 },
}

impl Mode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Mode::Exact => Ok(()),
            Mode::Ava { eps } if eps > 0.0 && eps.is_finite() => Ok(()),
            Mode::Ava { eps } => Err(Error::InvalidParameter(format!("ava eps must be > 0, got {eps}"))),
            Mode::Rva { eps } if eps > 0.0 && eps < 1.0 => Ok(()),
            Mode::Rva { eps } => Err(Error::InvalidParameter(format!("rva eps must be in (0, 1), got {eps}"))),
            Mode::Ra { tau, delta } => {
                if tau == 0 {
                    return Err(Error::InvalidParameter("ra tau must be >= 1".into()));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::InvalidParameter(format!("ra delta must be in (0, 1), got {delta}")));
                }
                Ok(())
            }
        }
    }

    /// Human-readable statement of what the mode promises.
    pub fn guarantee(&self) -> String {
        match *self {
            Mode::Exact => "exact".into(),
            Mode::Ava { eps } => format!("value ≥ exact − {eps}"),
            Mode::Rva { eps } => format!("value ≥ (1 − {eps})·exact when exact > 0"),
            Mode::Ra { tau, delta } => format!("rank ≤ {tau} with probability ≥ {}", 1.0 - delta),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => write!(f, "exact"),
            Mode::Ava { eps } => write!(f, "ava:eps={eps}"),
            Mode::Rva { eps } => write!(f, "rva:eps={eps}"),
            Mode::Ra { tau, delta } => write!(f, "ra:tau={tau},delta={delta}"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        const WHAT: &str = "mode spec";
        let (name, params) = split_spec(input);
        let mut eps = None;
        let mut tau = None;
        let mut delta = None;
        for (key, value) in params {
            match (name, key) {
                ("ava" | "rva", "eps" | "") => eps = Some(parse_num::<f64>(WHAT, input, "eps", value)?),
                ("ra", "tau") => tau = Some(parse_num::<usize>(WHAT, input, key, value)?),
                ("ra", "delta") => delta = Some(parse_num::<f64>(WHAT, input, key, value)?),
                _ => return Err(Error::parse(WHAT, input, format!("unexpected parameter `{key}`"))),
            }
        }
        let missing = |p: &str| Error::parse(WHAT, input, format!("missing `{p}`"));
        let mode = match name {
            "exact" => Mode::Exact,
            "ava" => Mode::Ava { eps: eps.ok_or_else(|| missing("eps"))? },
            "rva" => Mode::Rva { eps: eps.ok_or_else(|| missing("eps"))? },
            "ra" => Mode::Ra { tau: tau.ok_or_else(|| missing("tau"))?, delta: delta.ok_or_else(|| missing("delta"))? },
            other => return Err(Error::parse(WHAT, input, format!("unknown mode `{other}`"))),
        };
        mode.validate()?;
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub k: usize,
    pub mode: Mode,
    /// Use each child's cached distance to its parent to tighten its bound
    /// before spending a kernel evaluation on it.
    pub parent_distance_prune: bool,
}

impl SearchConfig {
    pub fn exact(k: usize) -> Self {
        SearchConfig { k, mode: Mode::Exact, parent_distance_prune: true }
    }

    pub fn with_mode(k: usize, mode: Mode) -> Self {
        SearchConfig { k, mode, parent_distance_prune: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    pub index: usize,
    pub value: f64,
}

impl Hit {
    /// Higher value first, then lower index.
    #[inline]
    fn ranks_before(&self, other: &Hit) -> bool {
        match self.value.total_cmp(&other.value) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.index < other.index,
        }
    }
}

/// Running top-k under the global tie-break rule.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    hits: Vec<Hit>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { k, hits: Vec::with_capacity(k + 1) }
    }

    pub fn is_full(&self) -> bool {
        self.hits.len() >= self.k
    }

    /// Current k-th best value, or negative infinity before k candidates.
    pub fn threshold(&self) -> f64 {
        if self.is_full() {
            self.hits[self.k - 1].value
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn best(&self) -> Option<&Hit> {
        self.hits.first()
    }

    pub fn offer(&mut self, index: usize, value: f64) {
        let hit = Hit { index, value };
        if self.is_full() && !hit.ranks_before(&self.hits[self.k - 1]) {
            return;
        }
        let pos = self.hits.partition_point(|h| h.ranks_before(&hit));
        self.hits.insert(pos, hit);
        self.hits.truncate(self.k);
    }

    pub fn into_hits(self) -> Vec<Hit> {
        self.hits
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueryResult {
    /// Descending by value, ties by ascending index.
    pub hits: Vec<Hit>,
    pub kernel_evals: u64,
    /// Nodes whose point was scored (evaluated, or inherited by a self-child).
    pub nodes_visited: u64,
    /// Nodes discarded on their bound without being scored.
    pub nodes_pruned: u64,
    pub duplicates_examined: u64,
    /// An approximation rule cut the search short; `false` means the hits are exact.
    pub approximated: bool,
    /// Relative-value mode only: the best value is not positive, so the
    /// relative guarantee does not apply.
    pub guarantee_void: bool,
}

/// Heap entry: `key` bounds every kernel value in the node's subtree.
#[derive(Debug)]
struct Frontier {
    key: f64,
    node: NodeId,
    /// `K(q, point)` when already known (self-children).
    known: Option<f64>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| other.node.cmp(&self.node))
    }
}

/// Rejects `k` outside `1..=n` and queries outside the dataset's domain.
pub fn check_query(dataset: &Dataset, kernel: &Kernel, query: Point<'_>, k: usize) -> Result<()> {
    let n = dataset.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    match (query, dataset.dim()) {
        (Point::Vector(v), Some(dim)) if v.len() != dim => Err(Error::DimensionMismatch { expected: dim, found: v.len() }),
        (Point::Vector(_), None) => Err(Error::DomainMismatch { kernel: kernel.to_string(), found: "vector" }),
        (Point::Sequence(_) | Point::Grams(_), Some(_)) => {
            Err(Error::DomainMismatch { kernel: kernel.to_string(), found: "string" })
        }
        _ => Ok(()),
    }
}

/// Max-kernel search for the top `config.k` points of the tree's dataset.
///
/// `K(q, q)` is evaluated once on entry. In exact mode the hits equal
/// [`linear_scan`]'s, index for index and value for value.
pub fn fastmks(tree: &CoverTree, query: Point<'_>, config: &SearchConfig, counter: &mut EvalCounter) -> Result<QueryResult> {
    let dataset = tree.dataset();
    let kernel = tree.kernel();
    check_query(dataset, kernel, query, config.k)?;
    config.mode.validate()?;
    let n = dataset.len();
    let ra_leaf_size = match config.mode {
        Mode::Ra { tau, delta } => Some(n as f64 / ra_sample_count(n, tau, delta)? as f64),
        _ => None,
    };

    let start = counter.count();
    let kqq = kernel.eval(query, query, counter)?;
    if kqq < 0.0 {
        return Err(Error::NegativeSelfKernel(kqq));
    }
    let sqrt_kqq = kqq.sqrt();
    let normalized = kernel.is_normalized();
    let slack = tree.distance_slack();

    let mut top = TopK::new(config.k);
    let mut heap = BinaryHeap::new();
    let mut visited = 0u64;
    let mut pruned = 0u64;
    let mut duplicates = 0u64;
    let mut approximated = false;

    // Discard threshold for a bound under the active mode. `exact` is the
    // threshold exact search would use, to tell when approximation kicked in.
    let discard_at = |top: &TopK| -> (f64, f64) {
        let beta = top.threshold();
        let relaxed = match config.mode {
            Mode::Exact | Mode::Ra { .. } => beta,
            Mode::Ava { eps } => beta + eps,
            Mode::Rva { eps } if beta > 0.0 => beta / (1.0 - eps),
            Mode::Rva { .. } => beta,
        };
        (relaxed, beta)
    };

    heap.push(Frontier { key: f64::INFINITY, node: tree.root(), known: None });
    while let Some(entry) = heap.pop() {
        let (relaxed, exact) = discard_at(&top);
        if entry.key < relaxed {
            if entry.key >= exact {
                approximated = true;
            }
            // Every remaining key is no larger.
            pruned += 1 + heap.len() as u64;
            if heap.iter().any(|e| e.key >= exact) {
                approximated = true;
            }
            break;
        }
        let node = tree.node(entry.node);
        let value = match entry.known {
            Some(v) => v,
            None => {
                let v = kernel.eval(query, dataset.point(node.point), counter)?;
                top.offer(node.point, v);
                v
            }
        };
        visited += 1;

        let radius = node.furthest_descendant + slack;
        let bound = subtree_bound(normalized, value, kqq, radius);
        let (relaxed, exact) = discard_at(&top);
        if node.is_leaf() {
            if !node.duplicates.is_empty() && bound >= relaxed {
                for &d in &node.duplicates {
                    let v = kernel.eval(query, dataset.point(d), counter)?;
                    duplicates += 1;
                    top.offer(d, v);
                }
            } else if !node.duplicates.is_empty() && bound >= exact {
                approximated = true;
            }
            continue;
        }
        if bound < relaxed {
            if bound >= exact {
                approximated = true;
            }
            continue;
        }

        // Mode-specific refusals to expand; the node's own point already counts.
        let stop = match config.mode {
            Mode::Exact => false,
            Mode::Ava { eps } => config.k == 1 && node.furthest_descendant * sqrt_kqq <= eps,
            Mode::Rva { eps } => {
                let best = top.threshold();
                config.k == 1 && best > 0.0 && node.furthest_descendant * sqrt_kqq <= eps * best
            }
            Mode::Ra { .. } => ra_leaf_size.is_some_and(|limit| node.subtree_size as f64 <= limit),
        };
        if stop {
            approximated = true;
            continue;
        }

        for (i, &child_id) in node.children.iter().enumerate() {
            let child = tree.node(child_id);
            let is_self = i == 0 && child.point == node.point;
            let key = if is_self {
                bound.min(subtree_bound(normalized, value, kqq, child.furthest_descendant + slack))
            } else if config.parent_distance_prune {
                let reach = child.parent_distance + child.furthest_descendant + slack;
                bound.min(subtree_bound(normalized, value, kqq, reach))
            } else {
                bound
            };
            if key < relaxed {
                if key >= exact {
                    approximated = true;
                }
                pruned += 1;
                continue;
            }
            heap.push(Frontier { key, node: child_id, known: is_self.then_some(value) });
        }
    }

    let hits = top.into_hits();
    let guarantee_void = matches!(config.mode, Mode::Rva { .. }) && hits.first().is_none_or(|h| h.value <= 0.0);
    Ok(QueryResult {
        hits,
        kernel_evals: counter.count() - start,
        nodes_visited: visited,
        nodes_pruned: pruned,
        duplicates_examined: duplicates,
        approximated,
        guarantee_void,
    })
}

/// Absolute-value approximation: every returned slot is within `eps` of
/// the exact value in that slot.
pub fn fastmks_ava(tree: &CoverTree, query: Point<'_>, k: usize, eps: f64, counter: &mut EvalCounter) -> Result<QueryResult> {
    fastmks(tree, query, &SearchConfig::with_mode(k, Mode::Ava { eps }), counter)
}

/// Relative-value approximation: every returned slot is at least `(1 - eps)`
/// times the exact value, provided the exact best is positive.
pub fn fastmks_rva(tree: &CoverTree, query: Point<'_>, k: usize, eps: f64, counter: &mut EvalCounter) -> Result<QueryResult> {
    fastmks(tree, query, &SearchConfig::with_mode(k, Mode::Rva { eps }), counter)
}

/// Rank approximation: subtrees holding at most `n / samples` points are
/// represented by their root point instead of being searched.
pub fn fastmks_ra(
    tree: &CoverTree,
    query: Point<'_>,
    k: usize,
    tau: usize,
    delta: f64,
    counter: &mut EvalCounter,
) -> Result<QueryResult> {
    fastmks(tree, query, &SearchConfig::with_mode(k, Mode::Ra { tau, delta }), counter)
}

/// Evaluates the kernel against every point: exactly `n` evaluations.
pub fn linear_scan(dataset: &Dataset, kernel: &Kernel, query: Point<'_>, k: usize, counter: &mut EvalCounter) -> Result<QueryResult> {
    check_query(dataset, kernel, query, k)?;
    let start = counter.count();
    let mut top = TopK::new(k);
    for i in 0..dataset.len() {
        let v = kernel.eval(query, dataset.point(i), counter)?;
        top.offer(i, v);
    }
    Ok(QueryResult {
        hits: top.into_hits(),
        kernel_evals: counter.count() - start,
        nodes_visited: 0,
        nodes_pruned: 0,
        duplicates_examined: 0,
        approximated: false,
        guarantee_void: false,
    })
}
