//! Closed-form quantities for the `G_n^b` family and the tail bounds used
//! for StochasticBalance.
//!
//! Poisson-type terms `e^{-b} b^k / k!` are produced by the multiplicative
//! recurrence `t_{k+1} = t_k * b / (k + 1)` or evaluated in log space; no
//! factorial tables are built.

use crate::error::{Error, Result};
use crate::policies::C;

/// Largest `n` accepted by [`greedy_expect_recurrence`].
pub const MAX_RECURRENCE_N: usize = 5000;

/// Probability mass function on `0..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionTable {
    masses: Vec<f64>,
}

impl DistributionTable {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("masses must be non-empty and non-negative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(DistributionTable { masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn support_max(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Total variation distance to `other`, padding the shorter side with 0.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        let len = self.masses.len().max(other.len());
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|k| (at(&self.masses, k) - at(other, k)).abs())
            .sum::<f64>()
    }
}

/// Successes in one round of `G_n^b` when its neighborhood has `m` unused
/// capacity, for vanishing `p`: `min(Pois(b), m)`.
pub fn round_dist(b: u32, m: usize) -> DistributionTable {
    let mut masses = Vec::with_capacity(m + 1);
    let mut term = (-(b as f64)).exp();
    let mut below = 0.0;
    for k in 0..m {
        masses.push(term);
        below += term;
        term *= b as f64 / (k + 1) as f64;
    }
    masses.push((1.0 - below).max(0.0));
    DistributionTable { masses }
}

/// Upper bound on the expected matches of server `j` (1-based) under
/// StochasticBalance on `G_n^b`: `b * min(sum_{i<=j} 1/(n-i+1), 1)`.
pub fn sbal_server_bound(n: usize, b: u32, j: usize) -> Result<f64> {
    if j == 0 || j > n {
        return Err(Error::invalid(format!("server index {j} outside 1..={n}")));
    }
    let sum: f64 = (1..=j).map(|i| 1.0 / (n - i + 1) as f64).sum();
    Ok(b as f64 * sum.min(1.0))
}

/// Bounds on StochasticBalance's expected matches on `G_n^b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub b: u32,
    /// `ceil((1 - 1/e)(n + 1))`.
    pub k: usize,
    /// Per-server bounds for `j = 1..=n`.
    pub per_server: Vec<f64>,
    /// Sum of the per-server bounds; never above `aggregate`.
    pub per_server_total: f64,
    /// `min(k, n) * b`.
    pub aggregate: f64,
    /// `min(k, n) / n`.
    pub ratio: f64,
}

pub fn sbal_total_bound(n: usize, b: u32) -> Result<BoundReport> {
    if n == 0 || b == 0 {
        return Err(Error::invalid("n and b must be positive"));
    }
    let k = (C * (n + 1) as f64).ceil() as usize;
    let mut per_server = Vec::with_capacity(n);
    let mut harmonic = 0.0;
    for i in 1..=n {
        harmonic += 1.0 / (n - i + 1) as f64;
        per_server.push(b as f64 * harmonic.min(1.0));
    }
    let capped = k.min(n);
    Ok(BoundReport {
        n,
        b,
        k,
        per_server_total: per_server.iter().sum(),
        per_server,
        aggregate: (capped as u64 * b as u64) as f64,
        ratio: capped as f64 / n as f64,
    })
}

/// `q_k = 1 / (k! e)` for `k < len`.
fn poisson_one_terms(len: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(len);
    let mut term = (-1.0f64).exp();
    for k in 0..len {
        q.push(term);
        term /= (k + 1) as f64;
    }
    q
}

/// `E[T_{n', m}]` for all `n' <= n`, `m <= n'`, by the round-one recurrence
/// of Greedy on `G_{n'}^1` restricted to its last `m` servers. Row `n'` has
/// `n' + 1` entries.
pub fn greedy_expect_table(n: usize) -> Result<Vec<Vec<f64>>> {
    if n > MAX_RECURRENCE_N {
        return Err(Error::invalid(format!(
            "n = {n} exceeds cap {MAX_RECURRENCE_N}"
        )));
    }
    let q = poisson_one_terms(n + 1);
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0]];
    for big_n in 1..=n {
        let row = next_greedy_row(&rows[big_n - 1], &q);
        rows.push(row);
    }
    Ok(rows)
}

/// Row `n'` of the Greedy recurrence from row `n' - 1`.
fn next_greedy_row(prev: &[f64], q: &[f64]) -> Vec<f64> {
    let big_n = prev.len();
    (0..=big_n)
        .map(|m| {
            // k successes in round one use the first k of the m servers; with
            // k = 0 and m = n' the next round still sees only n' - 1 servers
            let mut value = 0.0;
            let mut mass = 0.0;
            for k in 0..m {
                value += q[k] * (k as f64 + prev[(m - k).min(big_n - 1)]);
                mass += q[k];
            }
            value + (1.0 - mass) * m as f64
        })
        .collect()
}

/// `E[T_{n,m}]` via the recurrence.
pub fn greedy_expect_recurrence(n: usize, m: usize) -> Result<f64> {
    if m > n {
        return Err(Error::invalid(format!("m = {m} exceeds n = {n}")));
    }
    if n > MAX_RECURRENCE_N {
        return Err(Error::invalid(format!(
            "n = {n} exceeds cap {MAX_RECURRENCE_N}"
        )));
    }
    let q = poisson_one_terms(n + 1);
    let mut row = vec![0.0];
    for _ in 1..=n {
        row = next_greedy_row(&row, &q);
    }
    Ok(row[m])
}

/// `ln(j!)` for `j <= max`.
fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..=max {
        acc += (j as f64).ln();
        out.push(acc);
    }
    out
}

/// `E[T_{n,m}] = m - sum_{k<m} (n-k)^{m-k-1} / ((m-k-1)! e^{n-k})`, with
/// every term evaluated in log space.
pub fn greedy_expect_closed(n: usize, m: usize) -> Result<f64> {
    if m > n {
        return Err(Error::invalid(format!("m = {m} exceeds n = {n}")));
    }
    let lnf = ln_factorials(m);
    let tail: f64 = (0..m)
        .map(|k| {
            let base = (n - k) as f64;
            let e = m - k - 1;
            (e as f64 * base.ln() - lnf[e] - base).exp()
        })
        .sum();
    Ok(m as f64 - tail)
}

/// `k^{k-1} / ((k-1)! e^k)`, the `k`-th term of Greedy's loss on `G_n^1`.
/// Decays like `1 / sqrt(2 pi k)`.
pub fn greedy_summand(k: usize) -> f64 {
    assert!(k >= 1);
    let kf = k as f64;
    let ln_fact: f64 = (1..k).map(|j| (j as f64).ln()).sum();
    ((kf - 1.0) * kf.ln() - ln_fact - kf).exp()
}

/// Summands `k = 1..=n` of [`greedy_ratio`].
pub fn greedy_summands(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut ln_fact = 0.0; // ln((k-1)!)
    for k in 1..=n {
        let kf = k as f64;
        if k > 1 {
            ln_fact += (kf - 1.0).ln();
        }
        out.push(((kf - 1.0) * kf.ln() - ln_fact - kf).exp());
    }
    out
}

/// `E[Gre(G_n^1)] / n = 1 - (1/n) sum_{k=1}^n k^{k-1} / ((k-1)! e^k)`.
pub fn greedy_ratio(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    Ok(1.0 - greedy_summands(n).iter().sum::<f64>() / n as f64)
}

/// Exact `Pr[X >= threshold]` for `X` a sum of independent Bernoulli(`p_i`),
/// by the `O(k * threshold)` convolution with an absorbing top bucket.
pub fn poisson_binomial_tail(probs: &[f64], threshold: usize) -> Result<f64> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    if threshold == 0 {
        return Ok(1.0);
    }
    // dist[j] = Pr[X = j] for j < threshold; dist[threshold] = Pr[X >= threshold]
    let mut dist = vec![0.0; threshold + 1];
    dist[0] = 1.0;
    for &p in probs {
        dist[threshold] += dist[threshold - 1] * p;
        for j in (1..threshold).rev() {
            dist[j] = dist[j] * (1.0 - p) + dist[j - 1] * p;
        }
        dist[0] *= 1.0 - p;
    }
    Ok(dist[threshold])
}

/// Chebyshev bound `load / (capacity - load)^2` on the probability that a
/// server with the given load reaches its capacity, clipped to `[0, 1]`.
pub fn chebyshev_bound(load: f64, capacity: f64) -> Result<f64> {
    if !(load >= 0.0 && load < capacity) {
        return Err(Error::invalid(format!(
            "need 0 <= load < capacity, got load {load}, capacity {capacity}"
        )));
    }
    Ok((load / (capacity - load).powi(2)).min(1.0))
}

/// [`chebyshev_bound`] at load `b - b^{2/3}`; decays like `b^{-1/3}`.
pub fn chebyshev_at_cutoff(b: f64) -> Result<f64> {
    chebyshev_bound(b - b.powf(2.0 / 3.0), b)
}
