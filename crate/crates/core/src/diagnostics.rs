//! Dataset hardness measures and speedup accounting.
//!
//! The expansion constant is computed exactly from all pairwise distances.
//! The directional concentration constant quantifies over every direction
//! in feature space and cannot be computed; [`directional_concentration_estimate`]
//! reports a sampled lower estimate instead.

use fastmks_api::{HardnessReport, SpeedupReport, SpeedupRow};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::EvalCounter;

pub const DEFAULT_CAP: usize = fastmks_api::DEFAULT_DIAGNOSTIC_CAP;
pub const GAMMA_METHOD: &str = "sampled-direction greedy cover";

/// Smallest `c >= 2` with `|B(p, 2r)| <= c |B(p, r)|` for every point `p`
/// and radius `r > 0`, balls closed. Needs the self-kernel cache and spends
/// `n (n - 1) / 2` evaluations.
pub fn expansion_constant(dataset: &Dataset, counter: &mut EvalCounter, cap: usize) -> Result<f64> {
    let n = dataset.len();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    dataset.max_self_kernel()?;
    let rows = pairwise_rows(dataset, counter)?;
    let worst = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut d: Vec<f64> = (0..n).map(|q| distance_at(&rows, p, q)).collect();
            d.sort_by(f64::total_cmp);
            max_ball_ratio(&d)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst.max(2.0))
}

/// Upper triangle of the distance matrix, row `i` holding `d(i, j)` for `j > i`.
fn pairwise_rows(dataset: &Dataset, counter: &mut EvalCounter) -> Result<Vec<Vec<f64>>> {
    let n = dataset.len();
    let rows: Vec<(Vec<f64>, EvalCounter)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut local = EvalCounter::new();
            let row = (i + 1..n).map(|j| dataset.induced_distance(i, j, &mut local)).collect::<Result<Vec<_>>>()?;
            Ok((row, local))
        })
        .collect::<Result<_>>()?;
    Ok(rows
        .into_iter()
        .map(|(row, local)| {
            counter.absorb(local);
            row
        })
        .collect())
}

fn distance_at(rows: &[Vec<f64>], a: usize, b: usize) -> f64 {
    match a.cmp(&b) {
        std::cmp::Ordering::Equal => 0.0,
        std::cmp::Ordering::Less => rows[a][b - a - 1],
        std::cmp::Ordering::Greater => rows[b][a - b - 1],
    }
}

/// Supremum of `|B(2r)| / |B(r)|` over `r > 0` for one point, given its
/// sorted distances to every point (itself included).
///
/// Between consecutive distinct distances `v < w` the denominator is fixed
/// at `#{d <= v}` while the numerator grows toward `#{d < 2w}` as `r`
/// approaches `w` from below; past the largest distance both balls hold
/// everything. Smaller radii than the first positive distance fall under
/// `v = 0`.
fn max_ball_ratio(sorted: &[f64]) -> f64 {
    let mut best: f64 = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let inside = sorted.partition_point(|&d| d <= v);
        let Some(&w) = sorted.get(inside) else { break };
        let outer = sorted.partition_point(|&d| d < 2.0 * w);
        best = best.max(outer as f64 / inside as f64);
        i = inside;
    }
    best
}

/// Projections of every point onto the feature-space direction of point
/// `direction`: `K(x, r) / sqrt(K(x, x))`. Costs `n` evaluations; `None`
/// if the direction has zero norm.
pub fn projections(dataset: &Dataset, direction: usize, counter: &mut EvalCounter) -> Result<Option<Vec<f64>>> {
    let kernel = *dataset.kernel().ok_or(Error::MissingSelfKernels)?;
    let norm = dataset.self_kernel(direction)?.max(0.0).sqrt();
    if norm == 0.0 {
        return Ok(None);
    }
    let x = dataset.point(direction);
    (0..dataset.len())
        .map(|r| Ok(kernel.eval(x, dataset.point(r), counter)? / norm))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Points whose projection lies within `delta` of `proj[center]`, ascending.
pub fn slab(proj: &[f64], center: usize, delta: f64) -> Vec<usize> {
    let c = proj[center];
    (0..proj.len()).filter(|&r| (proj[r] - c).abs() <= delta).collect()
}

/// Greedy cover of `members` by balls of radius `delta`: take the first
/// uncovered point, discard everything within `2 delta` of it, repeat.
///
/// The chosen centers are pairwise more than `2 delta` apart, so no single
/// ball of radius `delta` holds two of them: the count never exceeds the
/// optimal cover size of the set.
pub fn greedy_cover(dataset: &Dataset, members: &[usize], delta: f64, counter: &mut EvalCounter) -> Result<usize> {
    let mut remaining = members.to_vec();
    let mut balls = 0;
    while let Some((&center, rest)) = remaining.split_first() {
        balls += 1;
        let mut keep = Vec::with_capacity(rest.len());
        for &r in rest {
            if dataset.induced_distance(center, r, counter)? > 2.0 * delta {
                keep.push(r);
            }
        }
        remaining = keep;
    }
    Ok(balls)
}

/// Sampled estimate of the directional concentration constant.
///
/// Directions are taken along sampled dataset points; for each, slabs of
/// half-width `delta` are centered on sampled points `p`, with `delta` the
/// distance from `p` to another sampled point. The largest greedy cover
/// count is returned, at least 1.
pub fn directional_concentration_estimate(
    dataset: &Dataset,
    direction_samples: usize,
    interval_samples: usize,
    seed: u64,
    counter: &mut EvalCounter,
) -> Result<f64> {
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();
    let directions: Vec<usize> = all.choose_multiple(&mut rng, direction_samples.min(n)).copied().collect();
    let mut best = 1usize;
    for x in directions {
        let Some(proj) = projections(dataset, x, counter)? else { continue };
        for _ in 0..interval_samples {
            let p = rng.random_range(0..n);
            let other = rng.random_range(0..n);
            let delta = dataset.induced_distance(p, other, counter)?;
            if delta == 0.0 {
                continue;
            }
            let members = slab(&proj, p, delta);
            best = best.max(greedy_cover(dataset, &members, delta, counter)?);
        }
    }
    Ok(best as f64)
}

/// Both hardness measures. The expansion constant is left out when `n`
/// exceeds `cap`; the estimate is always computed.
pub fn hardness_report(
    dataset: &Dataset,
    direction_samples: usize,
    interval_samples: usize,
    cap: usize,
    seed: u64,
    counter: &mut EvalCounter,
) -> Result<HardnessReport> {
    let kernel = dataset.kernel().ok_or(Error::MissingSelfKernels)?.to_string();
    let expansion = match expansion_constant(dataset, counter, cap) {
        Ok(c) => Some(c),
        Err(Error::CapExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let gamma = directional_concentration_estimate(dataset, direction_samples, interval_samples, seed, counter)?;
    Ok(HardnessReport {
        expansion_constant: expansion,
        gamma_estimate: gamma,
        gamma_method: GAMMA_METHOD.into(),
        direction_samples,
        interval_samples,
        dataset_fingerprint: dataset.fingerprint(),
        kernel,
    })
}

/// `Q n / sum(evals)` over a batch of `(k, kernel_evals)` records, with a
/// per-k breakdown (ascending k) and the speedup after charging
/// `construction_evals` to the batch.
pub fn speedup_report(n: usize, records: &[(usize, u64)], construction_evals: u64) -> SpeedupReport {
    let ratio = |queries: usize, evals: u64| {
        if evals == 0 {
            f64::INFINITY
        } else {
            (queries as f64 * n as f64) / evals as f64
        }
    };
    let total: u64 = records.iter().map(|r| r.1).sum();
    let mut ks: Vec<usize> = records.iter().map(|r| r.0).collect();
    ks.sort_unstable();
    ks.dedup();
    let per_k = ks
        .into_iter()
        .map(|k| {
            let (q, evals) = records.iter().filter(|r| r.0 == k).fold((0usize, 0u64), |(q, e), r| (q + 1, e + r.1));
            SpeedupRow { n, k, queries: q, mean_kernel_evals: evals as f64 / q as f64, speedup: ratio(q, evals) }
        })
        .collect();
    SpeedupReport {
        n,
        queries: records.len(),
        total_kernel_evals: total,
        speedup: ratio(records.len(), total),
        per_k,
        construction_evals,
        amortized_speedup: ratio(records.len(), total + construction_evals),
    }
}
