//! Cover tree over the metric induced by a kernel.
//!
//! The tree is stored in its explicit representation: chains of self-children
//! are coalesced, so every internal node has at least one child besides its
//! self-child and the node count stays below `2n`. A node at scale `s` covers
//! its children within `base^s`; children of one node are pairwise more than
//! `base^(s-1)` apart.
//!
//! All geometry goes through [`Dataset::induced_distance`], so construction
//! never looks inside a point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{EvalCounter, Kernel};

pub const DEFAULT_BASE: f64 = 1.3;

/// Stack size for the recursive builder. Depth grows with the number of
/// distinct scales on a root-to-leaf path.
const BUILD_STACK_BYTES: usize = 256 << 20;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverNode {
    pub point: usize,
    /// `None` for leaves (scale minus infinity).
    pub scale: Option<i32>,
    /// The self-child comes first whenever the list is non-empty.
    pub children: Vec<NodeId>,
    /// Points at distance 0 from `point`; only leaves carry them.
    pub duplicates: Vec<usize>,
    pub furthest_descendant: f64,
    pub parent_distance: f64,
    pub subtree_size: usize,
}

impl CoverNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// `base^scale`, the covering radius of a node at `scale`.
#[inline]
pub fn scale_radius(base: f64, scale: i32) -> f64 {
    base.powi(scale)
}

/// Smallest integer `s` with `base^s >= d`, for `d > 0`.
pub fn ceil_scale(base: f64, d: f64) -> i32 {
    debug_assert!(d > 0.0);
    let mut s = (d.ln() / base.ln()).ceil() as i32;
    while scale_radius(base, s) < d {
        s += 1;
    }
    while scale_radius(base, s - 1) >= d {
        s -= 1;
    }
    s
}

/// Upper bound on the distance from a node at `scale` to any descendant:
/// the geometric series `base^s + base^(s-1) + ...`. Equals `2^(s+1)` for
/// base 2.
pub fn descendant_radius_bound(base: f64, scale: i32) -> f64 {
    scale_radius(base, scale) * base / (base - 1.0)
}

/// Result of [`split`]: points within `radius`, and points in
/// `(radius, 2 radius)`.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct SplitSets {
    pub near: Vec<usize>,
    pub far: Vec<usize>,
}

/// Moves points within `radius` of the pivot to `near` and points strictly
/// between `radius` and `2 radius` to `far`, removing both from the input
/// sets. Points at `2 radius` or beyond stay put. `distance_to_pivot` must
/// cover every point in `point_sets`.
pub fn split(
    distance_to_pivot: impl Fn(usize) -> f64,
    radius: f64,
    point_sets: &mut [&mut Vec<usize>],
) -> SplitSets {
    let mut out = SplitSets::default();
    for set in point_sets.iter_mut() {
        set.retain(|&x| {
            let d = distance_to_pivot(x);
            if d <= radius {
                out.near.push(x);
                false
            } else if d < 2.0 * radius {
                out.far.push(x);
                false
            } else {
                true
            }
        });
    }
    out
}

/// A point waiting to be placed, carrying its distances to every pivot on
/// the current construction path; the last entry is the current pivot.
#[derive(Debug)]
struct Pending {
    point: usize,
    dists: Vec<f64>,
}

impl Pending {
    #[inline]
    fn dist(&self) -> f64 {
        *self.dists.last().expect("pending point without pivot distance")
    }
}

/// Partitions by the current-pivot distance, like [`split`] over pending points.
fn split_pending(set: &mut Vec<Pending>, radius: f64, near: &mut Vec<Pending>, far: &mut Vec<Pending>) {
    let mut keep = Vec::with_capacity(set.len());
    for x in set.drain(..) {
        let d = x.dist();
        if d <= radius {
            near.push(x);
        } else if d < 2.0 * radius {
            far.push(x);
        } else {
            keep.push(x);
        }
    }
    *set = keep;
}

struct Built {
    node: NodeId,
    unused: Vec<Pending>,
    consumed: Vec<Pending>,
}

struct Builder<'a> {
    dataset: &'a Dataset,
    base: f64,
    slack: f64,
    counter: &'a mut EvalCounter,
    nodes: Vec<CoverNode>,
}

impl Builder<'_> {
    fn leaf(&mut self, point: usize, mut duplicates: Vec<usize>) -> NodeId {
        duplicates.sort_unstable();
        let subtree_size = 1 + duplicates.len();
        self.nodes.push(CoverNode {
            point,
            scale: None,
            children: Vec::new(),
            duplicates,
            furthest_descendant: 0.0,
            parent_distance: 0.0,
            subtree_size,
        });
        self.nodes.len() - 1
    }

    /// Builds the subtree of `p` at (at most) `scale`. Every point in `near`
    /// is within `base^scale` of `p` and ends up in the subtree; points in
    /// `far` are adopted when some child covers them and returned otherwise.
    fn construct(&mut self, p: usize, scale: i32, mut near: Vec<Pending>, far: Vec<Pending>) -> Result<Built> {
        if near.is_empty() {
            let node = self.leaf(p, Vec::new());
            return Ok(Built { node, unused: far, consumed: Vec::new() });
        }
        let max_dist = near.iter().map(Pending::dist).fold(0.0, f64::max);
        if max_dist == 0.0 {
            let node = self.leaf(p, near.iter().map(|x| x.point).collect());
            return Ok(Built { node, unused: far, consumed: near });
        }
        // Skip the levels where p would only have its self-child.
        let scale = scale.min(ceil_scale(self.base, max_dist));
        let outer = scale_radius(self.base, scale);
        let inner = scale_radius(self.base, scale - 1);

        let (mut self_near, mut self_far) = (Vec::new(), Vec::new());
        split_pending(&mut near, inner, &mut self_near, &mut self_far);
        let self_child = self.construct(p, scale - 1, self_near, self_far)?;
        let mut consumed = self_child.consumed;
        near.extend(self_child.unused);
        let mut far = far;
        let mut children = vec![self_child.node];

        while !near.is_empty() {
            let pick = near
                .iter()
                .enumerate()
                .min_by_key(|(_, x)| x.point)
                .map(|(i, _)| i)
                .expect("non-empty");
            let q = near.swap_remove(pick);
            let q_dist = q.dist();
            let (q_near, q_far) = self.split_for_pivot(&q, inner, &mut near, &mut far)?;
            let built = self.construct(q.point, scale - 1, q_near, q_far)?;
            self.nodes[built.node].parent_distance = q_dist;
            children.push(built.node);
            for mut x in built.unused {
                x.dists.pop();
                if x.dist() <= outer {
                    near.push(x);
                } else {
                    far.push(x);
                }
            }
            for mut x in built.consumed {
                x.dists.pop();
                consumed.push(x);
            }
            consumed.push(q);
        }

        if children.len() == 1 {
            return Ok(Built { node: children[0], unused: far, consumed });
        }
        let furthest_descendant = consumed.iter().map(Pending::dist).fold(0.0, f64::max);
        let subtree_size = children.iter().map(|&c| self.nodes[c].subtree_size).sum();
        self.nodes.push(CoverNode {
            point: p,
            scale: Some(scale),
            children,
            duplicates: Vec::new(),
            furthest_descendant,
            parent_distance: 0.0,
            subtree_size,
        });
        Ok(Built { node: self.nodes.len() - 1, unused: far, consumed })
    }

    /// Split of `near` and `far` around a new pivot `q`, computing `d(q, x)`
    /// only where the triangle inequality cannot rule `x` out.
    fn split_for_pivot(
        &mut self,
        q: &Pending,
        radius: f64,
        near: &mut Vec<Pending>,
        far: &mut Vec<Pending>,
    ) -> Result<(Vec<Pending>, Vec<Pending>)> {
        let (mut q_near, mut q_far) = (Vec::new(), Vec::new());
        let reach = 2.0 * radius + self.slack;
        for set in [near, far] {
            let mut keep = Vec::with_capacity(set.len());
            for mut x in set.drain(..) {
                // Pending stacks share the pivots of the current path, so
                // any pivot on it can rule x out.
                debug_assert_eq!(x.dists.len(), q.dists.len());
                if x.dists.iter().zip(&q.dists).any(|(a, b)| (a - b).abs() > reach) {
                    keep.push(x);
                    continue;
                }
                let d = self.dataset.induced_distance(q.point, x.point, self.counter)?;
                if d <= radius {
                    x.dists.push(d);
                    q_near.push(x);
                } else if d < 2.0 * radius {
                    x.dists.push(d);
                    q_far.push(x);
                } else {
                    keep.push(x);
                }
            }
            *set = keep;
        }
        Ok((q_near, q_far))
    }
}

/// Bound on how far a computed induced distance can sit from the exact one,
/// from cancellation in `K(x,x) + K(y,y) - 2K(x,y)`.
pub fn distance_rounding_slack(max_self_kernel: f64) -> f64 {
    4.0 * (2.0 * f64::EPSILON * max_self_kernel.max(f64::MIN_POSITIVE)).sqrt()
}

#[derive(Debug, Clone)]
pub struct CoverTree {
    nodes: Vec<CoverNode>,
    root: NodeId,
    base: f64,
    dataset: Arc<Dataset>,
    kernel: Kernel,
    construction_evals: u64,
    slack: f64,
}

impl CoverTree {
    /// Builds the tree rooted at dataset index 0. The dataset must carry the
    /// self-kernel cache for `kernel`. Kernel evaluations are added to
    /// `counter` and recorded as the construction cost.
    pub fn construct(dataset: Arc<Dataset>, kernel: Kernel, base: f64, counter: &mut EvalCounter) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::InvalidParameter(format!("tree base must be > 1, got {base}")));
        }
        if dataset.kernel() != Some(&kernel) {
            return Err(Error::MissingSelfKernels);
        }
        let slack = distance_rounding_slack(dataset.max_self_kernel()?);
        let before = counter.count();
        let (nodes, root) = std::thread::scope(|s| {
            std::thread::Builder::new()
                .name("cover-tree-build".into())
                .stack_size(BUILD_STACK_BYTES)
                .spawn_scoped(s, || build(&dataset, base, slack, counter))
                .expect("spawn builder thread")
                .join()
                .unwrap_or_else(|e| std::panic::resume_unwind(e))
        })?;
        let evals = counter.count() - before;
        Ok(CoverTree { nodes, root, base, dataset, kernel, construction_evals: evals, slack })
    }

    /// Assembles a tree from parts without checking invariants; see
    /// [`CoverTree::validate_invariants`].
    pub fn from_parts(
        dataset: Arc<Dataset>,
        kernel: Kernel,
        base: f64,
        nodes: Vec<CoverNode>,
        root: NodeId,
        construction_evals: u64,
    ) -> Result<Self> {
        if dataset.kernel() != Some(&kernel) {
            return Err(Error::MissingSelfKernels);
        }
        let n = dataset.len();
        if root >= nodes.len() {
            return Err(Error::IndexMismatch(format!("root {root} out of range")));
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.point >= n || node.duplicates.iter().any(|&d| d >= n) {
                return Err(Error::IndexMismatch(format!("node {id} references a point outside the dataset")));
            }
            if node.children.iter().any(|&c| c >= nodes.len() || c == id) {
                return Err(Error::IndexMismatch(format!("node {id} has an invalid child reference")));
            }
        }
        let slack = distance_rounding_slack(dataset.max_self_kernel()?);
        Ok(CoverTree { nodes, root, base, dataset, kernel, construction_evals, slack })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &CoverNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[CoverNode] {
        &self.nodes
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn construction_evals(&self) -> u64 {
        self.construction_evals
    }

    /// Padding added to cached radii at query time so that rounding in the
    /// induced distance cannot make a pruning bound unsound.
    pub fn distance_slack(&self) -> f64 {
        self.slack
    }

    /// Every dataset index stored under `id`: node points (once per distinct
    /// point) and duplicates.
    pub fn subtree_points(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let node = &self.nodes[cur];
            if node.is_leaf() {
                out.push(node.point);
                out.extend_from_slice(&node.duplicates);
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        out
    }

    pub fn stats(&self) -> TreeStats {
        let mut depth = 0;
        let mut max_children = 0;
        let mut leaves = 0;
        let mut duplicates = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, d)) = stack.pop() {
            let node = &self.nodes[id];
            depth = depth.max(d);
            max_children = max_children.max(node.children.len());
            duplicates += node.duplicates.len();
            if node.is_leaf() {
                leaves += 1;
            }
            stack.extend(node.children.iter().map(|&c| (c, d + 1)));
        }
        TreeStats {
            node_count: self.nodes.len(),
            leaf_count: leaves,
            depth,
            max_children,
            duplicates,
            root_scale: self.nodes[self.root].scale,
            construction_evals: self.construction_evals,
        }
    }

    /// Recomputes every cached distance with a scratch counter and checks
    /// the cover tree invariants. Failures are reported, not raised.
    pub fn validate_invariants(&self) -> ValidationReport {
        Validator::new(self).run()
    }
}

fn build(dataset: &Dataset, base: f64, slack: f64, counter: &mut EvalCounter) -> Result<(Vec<CoverNode>, NodeId)> {
    let n = dataset.len();
    let mut builder = Builder { dataset, base, slack, counter, nodes: Vec::with_capacity(2 * n) };
    let mut near = Vec::with_capacity(n.saturating_sub(1));
    for x in 1..n {
        let d = dataset.induced_distance(0, x, builder.counter)?;
        near.push(Pending { point: x, dists: vec![d] });
    }
    let max_dist = near.iter().map(Pending::dist).fold(0.0, f64::max);
    let top = if max_dist > 0.0 { ceil_scale(base, max_dist) } else { 0 };
    let built = builder.construct(0, top, near, Vec::new())?;
    debug_assert!(built.unused.is_empty());
    Ok((builder.nodes, built.node))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub leaf_count: usize,
    pub depth: usize,
    pub max_children: usize,
    pub duplicates: usize,
    pub root_scale: Option<i32>,
    pub construction_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Description of the first offending node.
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_NESTING: &str = "nesting";
pub const CHECK_COVERING: &str = "covering";
pub const CHECK_SEPARATION: &str = "separation";
pub const CHECK_FURTHEST: &str = "furthest_descendant";
pub const CHECK_PARENT_DISTANCE: &str = "parent_distance";
pub const CHECK_SUBTREE_SIZE: &str = "subtree_size";
pub const CHECK_COMPLETENESS: &str = "completeness";
pub const CHECK_NODE_COUNT: &str = "node_count";

struct Validator<'a> {
    tree: &'a CoverTree,
    counter: EvalCounter,
    failures: Vec<(&'static str, Option<String>)>,
}

impl<'a> Validator<'a> {
    fn new(tree: &'a CoverTree) -> Self {
        let names = [
            CHECK_NESTING,
            CHECK_COVERING,
            CHECK_SEPARATION,
            CHECK_FURTHEST,
            CHECK_PARENT_DISTANCE,
            CHECK_SUBTREE_SIZE,
            CHECK_COMPLETENESS,
            CHECK_NODE_COUNT,
        ];
        Validator { tree, counter: EvalCounter::new(), failures: names.iter().map(|n| (*n, None)).collect() }
    }

    fn fail(&mut self, name: &'static str, msg: impl FnOnce() -> String) {
        let slot = self.failures.iter_mut().find(|(n, _)| *n == name).expect("known check");
        if slot.1.is_none() {
            slot.1 = Some(msg());
        }
    }

    fn dist(&mut self, x: usize, y: usize) -> Option<f64> {
        self.tree.dataset.induced_distance(x, y, &mut self.counter).ok()
    }

    fn run(mut self) -> ValidationReport {
        let tree = self.tree;
        let base = tree.base;
        let n = tree.dataset.len();

        if tree.nodes.len() > 2 * n {
            let count = tree.nodes.len();
            self.fail(CHECK_NODE_COUNT, || format!("{count} explicit nodes for n = {n}"));
        }

        // Every point stored exactly once (as a leaf point or a duplicate),
        // every node reachable exactly once.
        let mut seen_points = vec![0u32; n];
        let mut seen_nodes = vec![0u32; tree.nodes.len()];
        let mut stack = vec![tree.root];
        while let Some(id) = stack.pop() {
            seen_nodes[id] += 1;
            if seen_nodes[id] > 1 {
                self.fail(CHECK_COMPLETENESS, || format!("node {id} reachable twice"));
                continue;
            }
            let node = &tree.nodes[id];
            if node.is_leaf() {
                seen_points[node.point] += 1;
                for &d in &node.duplicates {
                    seen_points[d] += 1;
                }
            }
            stack.extend(node.children.iter().copied());
        }
        if let Some(i) = seen_points.iter().position(|&c| c != 1) {
            let c = seen_points[i];
            self.fail(CHECK_COMPLETENESS, || format!("point {i} stored {c} times"));
        }
        if let Some(id) = seen_nodes.iter().position(|&c| c == 0) {
            self.fail(CHECK_COMPLETENESS, || format!("node {id} unreachable from the root"));
        }
        if tree.nodes[tree.root].parent_distance != 0.0 {
            self.fail(CHECK_PARENT_DISTANCE, || "root has a non-zero parent distance".into());
        }

        for (id, _) in seen_nodes.iter().enumerate().filter(|(_, &seen)| seen == 1) {
            self.check_node(id, base);
        }

        let checks = self
            .failures
            .into_iter()
            .map(|(name, first_failure)| InvariantCheck { name, passed: first_failure.is_none(), first_failure })
            .collect();
        ValidationReport { checks }
    }

    fn check_node(&mut self, id: NodeId, base: f64) {
        let tree = self.tree;
        let node = &tree.nodes[id];
        let p = node.point;

        // Subtree size and exact furthest-descendant distance.
        let points = tree.subtree_points(id);
        if points.len() != node.subtree_size {
            let (got, want) = (node.subtree_size, points.len());
            self.fail(CHECK_SUBTREE_SIZE, || format!("node {id}: cached {got}, actual {want}"));
        }
        if node.is_leaf() {
            if node.scale.is_some() {
                self.fail(CHECK_NESTING, || format!("leaf node {id} has a finite scale"));
            }
            for &d in &node.duplicates {
                if self.dist(p, d) != Some(0.0) {
                    self.fail(CHECK_COVERING, || format!("node {id}: duplicate {d} is not at distance 0"));
                }
            }
            if node.furthest_descendant != 0.0 {
                let fd = node.furthest_descendant;
                self.fail(CHECK_FURTHEST, || format!("leaf node {id}: cached {fd}, actual 0"));
            }
            return;
        }
        let mut furthest = 0.0f64;
        for &x in &points {
            if x != p {
                match self.dist(p, x) {
                    Some(d) => furthest = furthest.max(d),
                    None => self.fail(CHECK_FURTHEST, || format!("node {id}: distance to {x} failed")),
                }
            }
        }
        if furthest != node.furthest_descendant {
            let fd = node.furthest_descendant;
            self.fail(CHECK_FURTHEST, || format!("node {id}: cached {fd}, actual {furthest}"));
        }

        let Some(scale) = node.scale else {
            self.fail(CHECK_NESTING, || format!("internal node {id} has no scale"));
            return;
        };
        if node.furthest_descendant > descendant_radius_bound(base, scale) {
            let fd = node.furthest_descendant;
            self.fail(CHECK_FURTHEST, || format!("node {id}: furthest descendant {fd} exceeds the scale-{scale} bound"));
        }

        // Nesting: the self-child comes first and every child sits lower.
        let first = &tree.nodes[node.children[0]];
        if first.point != p {
            self.fail(CHECK_NESTING, || format!("node {id}: first child holds point {}, not {p}", first.point));
        }
        for &c in &node.children {
            if tree.nodes[c].scale.is_some_and(|s| s >= scale) {
                self.fail(CHECK_NESTING, || format!("node {id}: child {c} is not below scale {scale}"));
            }
        }
        if node.children.len() < 2 {
            self.fail(CHECK_NESTING, || format!("node {id}: only a self-child (not coalesced)"));
        }

        // Covering and cached parent distances.
        let cover = scale_radius(base, scale);
        let mut child_points = Vec::with_capacity(node.children.len());
        for (i, &c) in node.children.iter().enumerate() {
            let child = &tree.nodes[c];
            child_points.push(child.point);
            let d = if i == 0 && child.point == p { Some(0.0) } else { self.dist(p, child.point) };
            let Some(d) = d else {
                self.fail(CHECK_COVERING, || format!("node {id}: distance to child {c} failed"));
                continue;
            };
            if d > cover {
                self.fail(CHECK_COVERING, || format!("node {id} (scale {scale}): child {c} at distance {d} > {cover}"));
            }
            if child.parent_distance != d {
                let pd = child.parent_distance;
                self.fail(CHECK_PARENT_DISTANCE, || format!("node {c}: cached {pd}, actual {d}"));
            }
        }

        // Separation among the children, which share level scale - 1.
        let sep = scale_radius(base, scale - 1);
        for a in 0..child_points.len() {
            for b in a + 1..child_points.len() {
                if let Some(d) = self.dist(child_points[a], child_points[b]) {
                    if d <= sep {
                        let (x, y) = (child_points[a], child_points[b]);
                        self.fail(CHECK_SEPARATION, || {
                            format!("node {id}: children {x} and {y} at distance {d} <= {sep}")
                        });
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_for(rows: Vec<Vec<f64>>, kernel: Kernel, base: f64) -> CoverTree {
        let mut c = EvalCounter::new();
        let ds = Dataset::from_vectors(rows).unwrap().with_self_kernels(&kernel, &mut c).unwrap();
        CoverTree::construct(Arc::new(ds), kernel, base, &mut c).unwrap()
    }

    #[test]
    fn split_thresholds() {
        let dist = |x: usize| [0.5, 1.5, 3.0, 1.0][x];
        let mut set = vec![0, 1, 2];
        let out = split(dist, 1.0, &mut [&mut set]);
        assert_eq!(out.near, vec![0]);
        assert_eq!(out.far, vec![1]);
        assert_eq!(set, vec![2]);

        let mut boundary = vec![3];
        assert_eq!(split(dist, 1.0, &mut [&mut boundary]).near, vec![3]);

        let mut empty: Vec<usize> = Vec::new();
        assert_eq!(split(dist, 1.0, &mut [&mut empty]), SplitSets::default());
    }

    #[test]
    fn ceil_scale_brackets_distance() {
        for &base in &[1.3, 2.0] {
            for &d in &[1e-6, 0.3, 1.0, 1.3, 2.0, 17.0, 1e9] {
                let s = ceil_scale(base, d);
                assert!(scale_radius(base, s) >= d);
                assert!(scale_radius(base, s - 1) < d);
            }
        }
    }

    #[test]
    fn single_point_tree() {
        let t = tree_for(vec![vec![1.0, 2.0]], Kernel::Linear, DEFAULT_BASE);
        assert_eq!(t.nodes().len(), 1);
        let root = t.node(t.root());
        assert_eq!(root.furthest_descendant, 0.0);
        assert_eq!(root.subtree_size, 1);
        assert!(t.validate_invariants().passed());
        let stats = t.stats();
        assert_eq!((stats.depth, stats.node_count), (0, 1));
    }

    #[test]
    fn duplicates_are_bucketed() {
        let t = tree_for(vec![vec![0.0, 0.0], vec![0.0, 0.0]], Kernel::Linear, DEFAULT_BASE);
        assert_eq!(t.nodes().len(), 1);
        let root = t.node(t.root());
        assert_eq!(root.duplicates, vec![1]);
        assert_eq!(root.subtree_size, 2);
        assert!(t.validate_invariants().passed());

        let t = tree_for(vec![vec![1.0, 1.0]; 9], Kernel::Linear, DEFAULT_BASE);
        assert_eq!(t.stats().node_count, 1);
        assert_eq!(t.node(t.root()).subtree_size, 9);
    }

    #[test]
    fn small_line_tree_is_valid() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        for base in [1.3, 2.0] {
            let t = tree_for(rows.clone(), Kernel::Linear, base);
            let report = t.validate_invariants();
            assert!(report.passed(), "{report:?}");
            assert_eq!(t.node(t.root()).point, 0);
            assert_eq!(t.node(t.root()).subtree_size, 20);
        }
    }

    #[test]
    fn construction_counts_evals() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let mut c = EvalCounter::new();
        let ds = Dataset::from_vectors(rows).unwrap().with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        assert_eq!(c.count(), 50);
        let t = CoverTree::construct(Arc::new(ds), Kernel::Linear, DEFAULT_BASE, &mut c).unwrap();
        assert_eq!(c.count(), 50 + t.construction_evals());
        assert!(t.construction_evals() >= 49);
    }

    #[test]
    fn covering_violation_is_reported() {
        // root 0 at scale 0 (radius 1) with a child at distance 1.1.
        let mut c = EvalCounter::new();
        let ds = Dataset::from_vectors(vec![vec![0.0], vec![1.1]]).unwrap().with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        let leaf = |point, parent_distance| CoverNode {
            point,
            scale: None,
            children: vec![],
            duplicates: vec![],
            furthest_descendant: 0.0,
            parent_distance,
            subtree_size: 1,
        };
        let nodes = vec![
            CoverNode {
                point: 0,
                scale: Some(0),
                children: vec![1, 2],
                duplicates: vec![],
                furthest_descendant: 1.1,
                parent_distance: 0.0,
                subtree_size: 2,
            },
            leaf(0, 0.0),
            leaf(1, 1.1),
        ];
        let t = CoverTree::from_parts(Arc::new(ds), Kernel::Linear, 2.0, nodes, 0, 0).unwrap();
        let report = t.validate_invariants();
        let covering = report.check(CHECK_COVERING).unwrap();
        assert!(!covering.passed);
        assert!(covering.first_failure.as_ref().unwrap().starts_with("node 0"));
        assert!(report.check(CHECK_SEPARATION).unwrap().passed);
    }

    #[test]
    fn empty_dataset_and_bad_base() {
        let mut c = EvalCounter::new();
        let ds = Dataset::from_vectors(vec![vec![1.0]]).unwrap().with_self_kernels(&Kernel::Linear, &mut c).unwrap();
        let ds = Arc::new(ds);
        assert!(CoverTree::construct(ds.clone(), Kernel::Linear, 1.0, &mut c).is_err());
        assert!(matches!(CoverTree::construct(ds, Kernel::Cosine, 2.0, &mut c), Err(Error::MissingSelfKernels)));
    }
}
