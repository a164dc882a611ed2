//! Monte Carlo aggregation over independent seeded trials.
//!
//! Trial `t` under base seed `s` draws from ChaCha8 keyed by
//! `seed_from_u64(s)` on stream `t` (see [`trial_rng`]). Trials are grouped
//! into fixed chunks of [`CHUNK`] consecutive indices; each chunk is reduced
//! in trial order and the chunk partials are merged in chunk order, so
//! results do not depend on the number of workers.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{simulate, OutcomeOracle};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::policies::Policy;

pub const CHUNK: u64 = 512;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        McConfig {
            trials,
            seed,
            workers: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        McConfig { workers, ..self }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig::new(100_000, 0)
    }
}

/// Independent random stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Splits `0..trials` into chunks, evaluates `f` on each (in parallel when
/// more than one worker is available) and returns results in chunk order.
pub(crate) fn run_chunked<T, F>(trials: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> Result<T> + Sync + Send,
{
    let chunks: Vec<Range<u64>> = (0..trials.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(trials))
        .collect();
    let run = || {
        chunks
            .par_iter()
            .map(|r| f(r.clone()))
            .collect::<Result<Vec<T>>>()
    };
    if workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?
            .install(run)
    }
}

/// Running count, mean and sum of squared deviations (Welford), mergeable
/// with Chan's pairwise update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    /// Sample variance (`n - 1` denominator); 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn ci95(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        Z95 * (self.variance() / self.n as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stats {
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    /// `1.96 * sqrt(variance / trials)`.
    pub ci95: f64,
    pub server_mean_successes: Vec<f64>,
}

/// Estimates the expected matched weight of `policy` on `inst`.
pub fn monte_carlo(
    inst: &Instance,
    policy: &(impl Policy + ?Sized),
    cfg: &McConfig,
) -> Result<Stats> {
    monte_carlo_with(inst, |_| policy, cfg)
}

/// As [`monte_carlo`], with the policy for trial `t` built by `make(t)`.
pub fn monte_carlo_with<P, F>(inst: &Instance, make: F, cfg: &McConfig) -> Result<Stats>
where
    P: Policy,
    F: Fn(u64) -> P + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let partials = run_chunked(cfg.trials, cfg.workers, |range| {
        let mut moments = Moments::default();
        let mut successes = vec![0u64; inst.n_servers()];
        for t in range {
            let mut oracle = OutcomeOracle::Lazy(trial_rng(cfg.seed, t));
            let run = simulate(inst, &make(t), &mut oracle, |_, _| {})?;
            moments.push(run.matched_weight);
            for (acc, st) in successes.iter_mut().zip(&run.states) {
                *acc += st.successes() as u64;
            }
        }
        Ok((moments, successes))
    })?;
    let mut moments = Moments::default();
    let mut successes = vec![0u64; inst.n_servers()];
    for (m, s) in &partials {
        moments.merge(m);
        for (acc, v) in successes.iter_mut().zip(s) {
            *acc += v;
        }
    }
    Ok(Stats {
        trials: cfg.trials,
        mean: moments.mean,
        variance: moments.variance(),
        ci95: moments.ci95(),
        server_mean_successes: successes
            .iter()
            .map(|&s| s as f64 / cfg.trials as f64)
            .collect(),
    })
}

/// Empirical per-round success counts on a `G_n^b` instance. For every
/// round, histograms are kept per value of the unused capacity `m` of the
/// round's neighborhood at the start of the round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundHistogram {
    pub trials: u64,
    /// `rounds[i][m][k]`: trials in which round `i` (0-based) started with
    /// unused capacity `m` and produced `k` successes.
    pub rounds: Vec<BTreeMap<u64, Vec<u64>>>,
}

impl RoundHistogram {
    /// Marginal pmf of the successes of `round` over `0..=max_k`.
    pub fn pmf(&self, round: usize) -> Vec<f64> {
        let len = self.rounds[round]
            .values()
            .map(|h| h.len())
            .max()
            .unwrap_or(1);
        let mut counts = vec![0u64; len];
        for h in self.rounds[round].values() {
            for (c, v) in counts.iter_mut().zip(h) {
                *c += v;
            }
        }
        counts
            .iter()
            .map(|&c| c as f64 / self.trials as f64)
            .collect()
    }

    /// Pmf of the successes of `round` conditioned on starting capacity `m`,
    /// with the number of trials it is based on.
    pub fn conditional_pmf(&self, round: usize, m: u64) -> Option<(u64, Vec<f64>)> {
        let h = self.rounds[round].get(&m)?;
        let total: u64 = h.iter().sum();
        Some((total, h.iter().map(|&c| c as f64 / total as f64).collect()))
    }
}

/// Per-round success distributions of `policy` on an instance built by
/// [`crate::model::gen_gnb`].
pub fn round_successes(
    inst: &Instance,
    policy: &(impl Policy + ?Sized),
    cfg: &McConfig,
) -> Result<RoundHistogram> {
    let meta = inst.metadata();
    let (Some(n), Some(b), Some(size)) = (
        meta.param_u64("n"),
        meta.param_u64("b"),
        meta.param_u64("round_size"),
    ) else {
        return Err(Error::invalid("round_successes needs a gnb instance"));
    };
    if meta.generator != "gnb" || n as usize * size as usize != inst.n_requests() {
        return Err(Error::invalid("round_successes needs a gnb instance"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let (n, size) = (n as usize, size as usize);
    let merge = |into: &mut Vec<BTreeMap<u64, Vec<u64>>>, from: &Vec<BTreeMap<u64, Vec<u64>>>| {
        for (a, b) in into.iter_mut().zip(from) {
            for (m, h) in b {
                let slot = a.entry(*m).or_insert_with(|| vec![0; h.len()]);
                for (x, y) in slot.iter_mut().zip(h) {
                    *x += y;
                }
            }
        }
    };
    let partials = run_chunked(cfg.trials, cfg.workers, |range| {
        let mut rounds: Vec<BTreeMap<u64, Vec<u64>>> = vec![BTreeMap::new(); n];
        // successes[i][s]: successes of server s during round i
        let mut successes = vec![vec![0u64; n]; n];
        for t in range {
            successes.iter_mut().for_each(|row| row.fill(0));
            let mut oracle = OutcomeOracle::Lazy(trial_rng(cfg.seed, t));
            simulate(inst, policy, &mut oracle, |r, a| {
                if let Some(a) = a.filter(|a| a.success) {
                    successes[r / size][a.server] += 1;
                }
            })?;
            let mut used = vec![0u64; n];
            for i in 0..n {
                let m: u64 = (i..n).map(|s| b - used[s]).sum();
                let k: u64 = successes[i].iter().sum();
                let hist = rounds[i]
                    .entry(m)
                    .or_insert_with(|| vec![0; m as usize + 1]);
                hist[k as usize] += 1;
                for s in 0..n {
                    used[s] += successes[i][s];
                }
            }
        }
        Ok(rounds)
    })?;
    let mut rounds = vec![BTreeMap::new(); n];
    for p in &partials {
        merge(&mut rounds, p);
    }
    Ok(RoundHistogram {
        trials: cfg.trials,
        rounds,
    })
}
