//! Experiment drivers that assemble simulations, benchmarks and formulas into
//! [`Report`]s.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::analysis::{
    chebyshev_bound, greedy_expect_closed, greedy_expect_recurrence, greedy_ratio,
    poisson_binomial_tail, round_dist, sbal_total_bound,
};
use crate::benchmarks::{opt_fractional, sopt_dp};
use crate::dualaudit::{epsilon_curve, estimate_slack, Family, SlackEstimate};
use crate::engine::{monte_carlo, monte_carlo_with, trial_rng, McConfig, Stats};
use crate::error::{Error, Result};
use crate::model::{gen_gnb, to_json, Instance};
use crate::policies::{PolicyKind, RankedBalance, StochasticBalance, C};
use crate::report::{config_hash, num, Report};

/// How StochasticBalance resolves equal scores in the convergence sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Lowest server id, as in [`StochasticBalance`].
    Lowest,
    /// A fresh uniformly random server ranking per trial.
    #[default]
    Random,
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::Lowest => "lowest",
            TieBreak::Random => "random",
        })
    }
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest" => Ok(TieBreak::Lowest),
            "random" => Ok(TieBreak::Random),
            other => Err(Error::invalid(format!(
                "unknown tie-break '{other}' (expected lowest or random)"
            ))),
        }
    }
}

/// Mixed into the seed of the ranking stream so it never coincides with
/// the outcome stream of the same trial.
const RANK_SALT: u64 = 0x72616e6b;

fn random_rank(n: usize, seed: u64, trial: u64) -> Vec<u32> {
    let mut rank: Vec<u32> = (0..n as u32).collect();
    rank.shuffle(&mut trial_rng(seed ^ RANK_SALT, trial));
    rank
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub n_list: Vec<usize>,
    pub b: u32,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
    pub tie_break: TieBreak,
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sbal_mean: f64,
    pub sbal_ci95: f64,
    /// `E[SBal] / (n b)`.
    pub sim_ratio: f64,
    /// `min(k, n) / n` from the aggregate bound.
    pub bound_ratio: f64,
    /// `greedy_ratio(n b)`, a lower bound on `SOpt / (n b)`.
    pub greedy_ratio: f64,
    /// `E[SBal] / (n b greedy_ratio)`, an upper bound on the competitive ratio.
    pub implied_ratio: f64,
    pub implied_ci95: f64,
}

fn dedup_sorted(n_list: &[usize]) -> Result<Vec<usize>> {
    if n_list.is_empty() {
        return Err(Error::invalid("the n sweep is empty"));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() != n_list.len() {
        log::warn!("duplicate n values removed from the sweep");
    }
    Ok(ns)
}

pub fn convergence_rows(cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    dedup_sorted(&cfg.n_list)?
        .into_iter()
        .map(|n| {
            let inst = gen_gnb(n, cfg.b, cfg.p)?;
            let mc = McConfig::new(cfg.trials, cfg.seed).with_workers(cfg.workers);
            let stats = match cfg.tie_break {
                TieBreak::Lowest => monte_carlo(&inst, &StochasticBalance, &mc)?,
                TieBreak::Random => monte_carlo_with(
                    &inst,
                    |t| RankedBalance::new(random_rank(n, cfg.seed, t)),
                    &mc,
                )?,
            };
            let nb = n as f64 * cfg.b as f64;
            let g = greedy_ratio(n * cfg.b as usize)?;
            Ok(ConvergenceRow {
                n,
                sbal_mean: stats.mean,
                sbal_ci95: stats.ci95,
                sim_ratio: stats.mean / nb,
                bound_ratio: sbal_total_bound(n, cfg.b)?.ratio,
                greedy_ratio: g,
                implied_ratio: stats.mean / (nb * g),
                implied_ci95: stats.ci95 / (nb * g),
            })
        })
        .collect()
}

pub const CONVERGENCE_COLUMNS: &[&str] = &[
    "n",
    "b",
    "p",
    "sbal_mean",
    "sbal_ci95",
    "sim_ratio",
    "bound_ratio",
    "greedy_ratio",
    "implied_ratio",
    "implied_ci95",
];

pub fn cmd_convergence(cfg: &ConvergenceConfig) -> Result<Report> {
    let rows = convergence_rows(cfg)?;
    let mut report = Report::new("convergence", cfg.seed, cfg, CONVERGENCE_COLUMNS);
    report.note("trials", cfg.trials);
    report.note("tie_break", cfg.tie_break);
    report.note("c", num(C));
    for r in rows {
        report.push_row([
            r.n.to_string(),
            cfg.b.to_string(),
            num(cfg.p),
            num(r.sbal_mean),
            num(r.sbal_ci95),
            num(r.sim_ratio),
            num(r.bound_ratio),
            num(r.greedy_ratio),
            num(r.implied_ratio),
            num(r.implied_ci95),
        ])?;
    }
    Ok(report)
}

/// The analytic part of the convergence table: `bound_ratio / greedy_ratio`
/// per `n`, with no simulation.
pub fn formula_convergence(n_list: &[usize], b: u32) -> Result<Report> {
    let ns = dedup_sorted(n_list)?;
    let cfg = (&ns, b);
    let mut report = Report::new(
        "formulas convergence",
        0,
        &cfg,
        &[
            "n",
            "b",
            "k",
            "bound_ratio",
            "greedy_ratio",
            "implied_ratio",
        ],
    );
    report.note("c", num(C));
    for n in ns {
        let bound = sbal_total_bound(n, b)?;
        let g = greedy_ratio(n * b as usize)?;
        report.push_row([
            n.to_string(),
            b.to_string(),
            bound.k.to_string(),
            num(bound.ratio),
            num(g),
            num(bound.ratio / g),
        ])?;
    }
    Ok(report)
}

/// `E[T_{n,m}]` by recurrence and by closed form for every `m <= n <= n_max`.
pub fn formula_greedy(n_max: usize) -> Result<Report> {
    let mut report = Report::new(
        "formulas greedy",
        0,
        &n_max,
        &["n", "m", "recurrence", "closed", "abs_diff"],
    );
    for n in 1..=n_max {
        for m in 0..=n {
            let r = greedy_expect_recurrence(n, m)?;
            let c = greedy_expect_closed(n, m)?;
            report.push_row([
                n.to_string(),
                m.to_string(),
                num(r),
                num(c),
                num((r - c).abs()),
            ])?;
        }
    }
    Ok(report)
}

pub fn formula_greedy_ratio(n_list: &[usize]) -> Result<Report> {
    let ns = dedup_sorted(n_list)?;
    let mut report = Report::new("formulas greedy-ratio", 0, &ns, &["n", "greedy_ratio"]);
    for n in ns {
        report.push_row([n.to_string(), num(greedy_ratio(n)?)])?;
    }
    Ok(report)
}

pub fn formula_round_dist(b: u32, m: usize) -> Result<Report> {
    let table = round_dist(b, m);
    let mut report = Report::new("formulas round-dist", 0, &(b, m), &["k", "probability"]);
    for (k, p) in table.masses().iter().enumerate() {
        report.push_row([k.to_string(), num(*p)])?;
    }
    Ok(report)
}

pub fn formula_sbal_bound(n: usize, b: u32) -> Result<Report> {
    let bound = sbal_total_bound(n, b)?;
    let mut report = Report::new("formulas sbal-bound", 0, &(n, b), &["server", "bound"]);
    report.note("k", bound.k);
    report.note("aggregate", num(bound.aggregate));
    report.note("ratio", num(bound.ratio));
    for (j, v) in bound.per_server.iter().enumerate() {
        report.push_row([(j + 1).to_string(), num(*v)])?;
    }
    Ok(report)
}

pub fn formula_chebyshev(b: f64, loads: &[f64]) -> Result<Report> {
    let mut report = Report::new(
        "formulas chebyshev",
        0,
        &(b, loads),
        &["load", "capacity", "bound"],
    );
    for &l in loads {
        report.push_row([num(l), num(b), num(chebyshev_bound(l, b)?)])?;
    }
    Ok(report)
}

/// Exact `P[sum Bernoulli(p_i) >= t]` next to the Chebyshev bound at the mean load.
pub fn formula_tail(probs: &[f64], thresholds: &[usize]) -> Result<Report> {
    let mut report = Report::new(
        "formulas tail",
        0,
        &(probs, thresholds),
        &["threshold", "load", "exact", "chebyshev"],
    );
    let load: f64 = probs.iter().sum();
    for &t in thresholds {
        let exact = poisson_binomial_tail(probs, t)?;
        let cheb = if load < t as f64 {
            num(chebyshev_bound(load, t as f64)?)
        } else {
            "NA".to_string()
        };
        report.push_row([t.to_string(), num(load), num(exact), cheb])?;
    }
    Ok(report)
}

pub const STATS_COLUMNS: &[&str] = &["policy", "instance", "trials", "mean", "var", "ci95"];

pub fn stats_row(policy: &str, instance: &str, stats: &Stats) -> Vec<String> {
    vec![
        policy.to_string(),
        instance.to_string(),
        stats.trials.to_string(),
        num(stats.mean),
        num(stats.variance),
        num(stats.ci95),
    ]
}

/// Short fingerprint of an instance's serialized form.
pub fn instance_id(inst: &Instance) -> String {
    config_hash(&to_json(inst))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareConfig {
    pub policies: Vec<PolicyKind>,
    pub trials: u64,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
}

/// A benchmark value or the reason it is missing.
#[derive(Clone, Debug, PartialEq)]
pub enum Benchmark {
    Value(f64),
    Unavailable(String),
}

impl Benchmark {
    fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Benchmark::Value(v)),
            Err(Error::Capacity(msg)) => Ok(Benchmark::Unavailable(msg)),
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Benchmark::Value(v) => Some(*v),
            Benchmark::Unavailable(_) => None,
        }
    }

    fn cell(&self) -> String {
        self.value().map_or_else(|| "NA".into(), num)
    }
}

/// `mean / bench`, with `0 / 0` taken as 1. The flag is set in that case.
pub fn ratio(mean: f64, bench: f64) -> (f64, bool) {
    if bench == 0.0 && mean == 0.0 {
        (1.0, true)
    } else {
        (mean / bench, false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub policy: PolicyKind,
    pub stats: Stats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub opt: Benchmark,
    pub sopt: Benchmark,
    pub rows: Vec<CompareRow>,
}

pub fn compare(inst: &Instance, cfg: &CompareConfig) -> Result<Comparison> {
    if cfg.policies.is_empty() {
        return Err(Error::invalid("no policies to compare"));
    }
    let opt = Benchmark::from_result(opt_fractional(inst).map(|s| s.value))?;
    let sopt = Benchmark::from_result(sopt_dp(inst).map(|d| d.value))?;
    let mc = McConfig::new(cfg.trials, cfg.seed).with_workers(cfg.workers);
    let rows = cfg
        .policies
        .iter()
        .map(|&policy| {
            Ok(CompareRow {
                policy,
                stats: monte_carlo(inst, &policy, &mc)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Comparison { opt, sopt, rows })
}

pub const COMPARE_COLUMNS: &[&str] = &[
    "policy",
    "mean",
    "ci95",
    "opt",
    "sopt",
    "ratio_opt",
    "ratio_sopt",
    "zero_over_zero",
];

pub fn cmd_compare(inst: &Instance, cfg: &CompareConfig) -> Result<Report> {
    let cmp = compare(inst, cfg)?;
    let mut report = Report::new(
        "compare",
        cfg.seed,
        &(cfg, instance_id(inst)),
        COMPARE_COLUMNS,
    );
    report.note("trials", cfg.trials);
    report.note("instance", instance_id(inst));
    for (name, b) in [("opt", &cmp.opt), ("sopt", &cmp.sopt)] {
        if let Benchmark::Unavailable(msg) = b {
            report.note(name, format!("unavailable ({msg})"));
        }
    }
    for row in &cmp.rows {
        let mut flagged = false;
        let mut ratio_cell = |b: &Benchmark| match b.value() {
            Some(v) => {
                let (r, f) = ratio(row.stats.mean, v);
                flagged |= f;
                num(r)
            }
            None => "NA".into(),
        };
        let ratio_opt = ratio_cell(&cmp.opt);
        let ratio_sopt = ratio_cell(&cmp.sopt);
        report.push_row([
            row.policy.to_string(),
            num(row.stats.mean),
            num(row.stats.ci95),
            cmp.opt.cell(),
            cmp.sopt.cell(),
            ratio_opt,
            ratio_sopt,
            (flagged as u8).to_string(),
        ])?;
    }
    Ok(report)
}

pub const SLACK_COLUMNS: &[&str] = &[
    "request",
    "server",
    "probability",
    "estimate",
    "ci95",
    "target",
    "ratio",
];

pub fn slack_report(
    inst: &Instance,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<(SlackEstimate, Report)> {
    let est = estimate_slack(inst, trials, seed, workers)?;
    let mut report = Report::new(
        "dual-audit",
        seed,
        &(trials, instance_id(inst)),
        SLACK_COLUMNS,
    );
    report.note("trials", trials);
    report.note("min_ratio", num(est.min_ratio));
    report.note("c_effective", num(est.c_effective()));
    for e in &est.edges {
        report.push_row([
            e.request.to_string(),
            e.server.to_string(),
            num(e.probability),
            num(e.estimate),
            num(e.ci95),
            num(e.target),
            num(e.ratio),
        ])?;
    }
    Ok((est, report))
}

#[derive(Serialize)]
struct SweepConfig<'a> {
    family: String,
    b_list: &'a [u32],
    trials: u64,
}

pub fn epsilon_report(
    family: &Family,
    b_list: &[u32],
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Report> {
    if b_list.is_empty() {
        return Err(Error::invalid("the b sweep is empty"));
    }
    let rows = epsilon_curve(family, b_list, trials, seed, workers)?;
    let cfg = SweepConfig {
        family: format!("{family:?}"),
        b_list,
        trials,
    };
    let mut report = Report::new(
        "dual-audit sweep",
        seed,
        &cfg,
        &["b", "min_ratio", "ci95", "c_effective"],
    );
    report.note("trials", trials);
    for r in rows {
        report.push_row([
            r.b.to_string(),
            num(r.min_ratio),
            num(r.ci95),
            num(C * r.min_ratio),
        ])?;
    }
    Ok(report)
}
