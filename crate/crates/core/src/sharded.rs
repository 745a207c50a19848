//! In-process sharded search.
//!
//! The dataset is split over `m` shards, each with its own cover tree. A
//! query goes to every shard and the per-shard top-k lists are merged. The
//! cost model counts kernel evaluations: the parallel cost of a query is the
//! slowest shard plus `m` for the master's merge.

use std::sync::Arc;

use fastmks_api::{Partitioner, ShardCost};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cover_tree::CoverTree;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{EvalCounter, Kernel, Point};
use crate::search::{check_query, fastmks, QueryResult, SearchConfig, TopK};

#[derive(Debug, Clone)]
pub struct ShardedIndex {
    shards: Vec<CoverTree>,
    /// Global index of each shard-local point.
    members: Vec<Vec<usize>>,
    shard_of: Vec<usize>,
    dataset: Arc<Dataset>,
    kernel: Kernel,
}

/// Global point indices for each of `m` shards. Shard sizes differ by at
/// most one.
pub fn partition(n: usize, m: usize, partitioner: Partitioner, seed: u64) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("shard count must be in 1..={n}, got {m}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if partitioner == Partitioner::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut shards = vec![Vec::with_capacity(n / m + 1); m];
    for (pos, i) in order.into_iter().enumerate() {
        shards[pos % m].push(i);
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

impl ShardedIndex {
    /// Builds one tree per shard. Self-kernel and construction evaluations
    /// of every shard go to `counter`.
    pub fn build(
        dataset: Arc<Dataset>,
        kernel: Kernel,
        m: usize,
        base: f64,
        partitioner: Partitioner,
        seed: u64,
        counter: &mut EvalCounter,
    ) -> Result<Self> {
        let members = partition(dataset.len(), m, partitioner, seed)?;
        let mut shards = Vec::with_capacity(m);
        let mut shard_of = vec![0; dataset.len()];
        for (s, idx) in members.iter().enumerate() {
            for &i in idx {
                shard_of[i] = s;
            }
            let local = dataset.subset(idx).with_self_kernels(&kernel, counter)?;
            shards.push(CoverTree::construct(Arc::new(local), kernel, base, counter)?);
        }
        Ok(ShardedIndex { shards, members, shard_of, dataset, kernel })
    }

    pub fn m(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[CoverTree] {
        &self.shards
    }

    pub fn members(&self, shard: usize) -> &[usize] {
        &self.members[shard]
    }

    pub fn shard_of(&self, index: usize) -> usize {
        self.shard_of[index]
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn construction_evals(&self) -> u64 {
        self.shards.iter().map(CoverTree::construction_evals).sum()
    }

    /// Searches every shard with `k` capped at the shard size and merges
    /// the lists under the global tie-break. Counters in the returned result
    /// are sums over shards.
    pub fn search(&self, query: Point<'_>, config: &SearchConfig, counter: &mut EvalCounter) -> Result<(QueryResult, ShardCost)> {
        check_query(&self.dataset, &self.kernel, query, config.k)?;
        let mut merged = TopK::new(config.k);
        let mut per_shard = Vec::with_capacity(self.m());
        let mut merge_items = 0;
        let mut total = QueryResult::default();
        for (s, tree) in self.shards.iter().enumerate() {
            let local = SearchConfig { k: config.k.min(tree.dataset().len()), ..*config };
            let r = fastmks(tree, query, &local, counter)?;
            merge_items += r.hits.len();
            for h in &r.hits {
                merged.offer(self.members[s][h.index], h.value);
            }
            per_shard.push(r.kernel_evals);
            total.kernel_evals += r.kernel_evals;
            total.nodes_visited += r.nodes_visited;
            total.nodes_pruned += r.nodes_pruned;
            total.duplicates_examined += r.duplicates_examined;
            total.approximated |= r.approximated;
        }
        total.hits = merged.into_hits();
        total.guarantee_void = matches!(config.mode, crate::search::Mode::Rva { .. })
            && total.hits.first().is_none_or(|h| h.value <= 0.0);
        let max = per_shard.iter().copied().max().unwrap_or(0);
        let cost = ShardCost {
            m: self.m(),
            total_evals: per_shard.iter().sum(),
            max_shard_evals: max,
            per_shard_evals: per_shard,
            merge_items,
            parallel_cost: max + self.m() as u64,
        };
        Ok((total, cost))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::linear_scan;

    fn dataset(n: usize) -> Arc<Dataset> {
        let rows = (0..n).map(|i| vec![(i as f64 * 0.7).sin() * 3.0, (i as f64 * 1.3).cos()]).collect();
        Arc::new(Dataset::from_vectors(rows).unwrap())
    }

    #[test]
    fn round_robin_sizes() {
        let p = partition(10, 3, Partitioner::RoundRobin, 0).unwrap();
        assert_eq!(p, vec![vec![0, 3, 6, 9], vec![1, 4, 7], vec![2, 5, 8]]);
        let p = partition(10, 3, Partitioner::Shuffled, 5).unwrap();
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(partition(3, 4, Partitioner::RoundRobin, 0).is_err());
        assert!(partition(3, 0, Partitioner::RoundRobin, 0).is_err());
    }

    #[test]
    fn merged_hits_match_oracle() {
        let ds = dataset(60);
        let full = (*ds).clone().with_self_kernels(&Kernel::Linear, &mut EvalCounter::new()).unwrap();
        for m in [1, 2, 7, 60] {
            let idx = ShardedIndex::build(ds.clone(), Kernel::Linear, m, 1.3, Partitioner::RoundRobin, 0, &mut EvalCounter::new()).unwrap();
            let q = [0.4, -1.0];
            let (r, cost) = idx.search(Point::Vector(&q), &SearchConfig::exact(5), &mut EvalCounter::new()).unwrap();
            let oracle = linear_scan(&full, &Kernel::Linear, Point::Vector(&q), 5, &mut EvalCounter::new()).unwrap();
            assert_eq!(r.hits, oracle.hits, "m = {m}");
            assert_eq!(cost.total_evals, r.kernel_evals);
            assert_eq!(cost.parallel_cost, cost.max_shard_evals + m as u64);
        }
    }
}
