//! Two-sided Wilcoxon rank-sum (Mann–Whitney) test.
//!
//! Ties get midranks. For combined sample sizes up to
//! [`EXACT_ENUMERATION_LIMIT`] the p-value is exact: every assignment of the
//! pooled ranks to the first group is enumerated and
//! `p = P(|W - mu| >= |w_obs - mu|)` under the uniform null. Larger samples
//! use the normal approximation with tie-corrected variance and a 0.5
//! continuity correction.
//!
//! Midranks are halves, so everything in the exact path runs on doubled
//! integer ranks: no float comparisons, and the returned p is an exact
//! count/total ratio. With the `parallel` feature the enumeration is split
//! into chunks of the combination sequence and counted on rayon workers;
//! chunk starts are located by combinatorial-number-system unranking.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest combined sample size handled by exact enumeration.
pub const EXACT_ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("rank-sum test requires non-empty samples")]
    EmptySample,
    #[error("rank-sum test requires finite values")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Rank sum of the first sample, with midranks.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: RankSumMethod,
}

/// Runs the two-sided test. Swapping the samples leaves the p-value unchanged.
pub fn rank_sum_test(sample_a: &[f64], sample_b: &[f64]) -> Result<RankSumResult, StatsError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if sample_a.iter().chain(sample_b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }

    let n = sample_a.len() + sample_b.len();
    if n <= EXACT_ENUMERATION_LIMIT {
        Ok(exact_test(sample_a, sample_b))
    } else {
        Ok(approx_test(sample_a, sample_b))
    }
}

/// Doubled midranks of the pooled samples, in pooled order. Doubling keeps
/// ranks integral: a tie run over sorted positions `s..=e` (0-based) has
/// midrank `(s + e + 2) / 2`, i.e. doubled midrank `s + e + 2`.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).expect("finite values"));

    let mut ranks2 = vec![0u64; pooled.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && pooled[order[end + 1]] == pooled[order[start]] {
            end += 1;
        }
        let doubled = (start + end + 2) as u64;
        for &idx in &order[start..=end] {
            ranks2[idx] = doubled;
        }
        start = end + 1;
    }
    ranks2
}

fn observed(sample_a: &[f64], sample_b: &[f64]) -> (Vec<u64>, u64, u64) {
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let ranks2 = doubled_midranks(&pooled);
    let w2_obs: u64 = ranks2[..sample_a.len()].iter().sum();
    let mu2 = sample_a.len() as u64 * (pooled.len() as u64 + 1);
    (ranks2, w2_obs, mu2)
}

fn exact_test(sample_a: &[f64], sample_b: &[f64]) -> RankSumResult {
    let (ranks2, w2_obs, mu2) = observed(sample_a, sample_b);
    let dev_obs = w2_obs.abs_diff(mu2);
    let na = sample_a.len();
    let total = binomial(ranks2.len() as u64, na as u64);

    #[cfg(feature = "parallel")]
    let extreme = exact_extreme_count_par(&ranks2, na, dev_obs);
    #[cfg(not(feature = "parallel"))]
    let extreme = exact_extreme_count_seq(&ranks2, na, dev_obs);

    RankSumResult {
        statistic: w2_obs as f64 / 2.0,
        p_value: extreme as f64 / total as f64,
        method: RankSumMethod::Exact,
    }
}

/// Counts group assignments whose rank sum deviates from the mean at least as
/// much as observed. Sequential walk of the whole combination sequence.
pub fn exact_extreme_count_seq(ranks2: &[u64], na: usize, dev_obs: u64) -> u64 {
    let total = binomial(ranks2.len() as u64, na as u64);
    count_extreme_range(ranks2, na, dev_obs, 0, total)
}

/// Parallel variant: the combination sequence is split into chunks, each
/// counted independently.
#[cfg(feature = "parallel")]
pub fn exact_extreme_count_par(ranks2: &[u64], na: usize, dev_obs: u64) -> u64 {
    use rayon::prelude::*;

    let total = binomial(ranks2.len() as u64, na as u64);
    let chunks = (rayon::current_num_threads() as u64 * 4).clamp(1, total.max(1));
    let chunk_len = total.div_ceil(chunks);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk_len;
            let len = chunk_len.min(total.saturating_sub(start));
            count_extreme_range(ranks2, na, dev_obs, start, len)
        })
        .sum()
}

/// Counts over `len` combinations starting at position `start` of the
/// combination sequence in increasing-mask order (Gosper's hack), where the
/// start mask is found by combinatorial unranking.
fn count_extreme_range(ranks2: &[u64], na: usize, dev_obs: u64, start: u64, len: u64) -> u64 {
    if len == 0 {
        return 0;
    }
    let n = ranks2.len();
    let mu2 = na as u64 * (n as u64 + 1);
    let mut mask = unrank_combination(start, n, na);
    let mut count = 0u64;
    for step in 0..len {
        let mut sum = 0u64;
        let mut bits = mask;
        while bits != 0 {
            let idx = bits.trailing_zeros() as usize;
            sum += ranks2[idx];
            bits &= bits - 1;
        }
        if sum.abs_diff(mu2) >= dev_obs {
            count += 1;
        }
        if step + 1 < len {
            mask = next_same_popcount(mask);
        }
    }
    count
}

/// Gosper's hack: the next larger integer with the same popcount.
fn next_same_popcount(mask: u32) -> u32 {
    let c = mask & mask.wrapping_neg();
    let r = mask + c;
    (((r ^ mask) >> 2) / c) | r
}

/// The `rank`-th (0-based) n-bit mask with k bits set, in increasing numeric
/// order, via the combinatorial number system.
fn unrank_combination(mut rank: u64, n: usize, k: usize) -> u32 {
    let mut mask = 0u32;
    let mut remaining = k as u64;
    for pos in (0..n).rev() {
        if remaining == 0 {
            break;
        }
        let below = binomial(pos as u64, remaining);
        if below <= rank {
            mask |= 1 << pos;
            rank -= below;
            remaining -= 1;
        }
    }
    mask
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result = 1u64;
    for i in 0..k {
        result = result * (n - i) / (i + 1);
    }
    result
}

fn approx_test(sample_a: &[f64], sample_b: &[f64]) -> RankSumResult {
    let (ranks2, w2_obs, mu2) = observed(sample_a, sample_b);
    let w = w2_obs as f64 / 2.0;
    let na = sample_a.len() as f64;
    let nb = sample_b.len() as f64;
    let n = na + nb;

    // Tie correction from runs of equal doubled midranks.
    let mut sorted = ranks2.clone();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        // Every pooled value tied: the statistic is degenerate.
        return RankSumResult {
            statistic: w,
            p_value: 1.0,
            method: RankSumMethod::NormalApprox,
        };
    }

    let mu = mu2 as f64 / 2.0;
    let dev = ((w - mu).abs() - 0.5).max(0.0); // continuity correction
    let z = dev / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    RankSumResult {
        statistic: w,
        p_value: p,
        method: RankSumMethod::NormalApprox,
    }
}
