//! Primal-dual bookkeeping for StochasticBalance runs.
//!
//! Every assignment of `r` to `s` at load `l` adds `w p f_s(l) / (b_s c)` to
//! `x̂(s)` and sets `ŷ(r) = w p (1 - f_s(l)) / c`, so the dual grows by
//! exactly `w p / c` while the primal grows by `w p`.

use serde::Serialize;

use crate::engine::{
    run_chunked, run_traced, trial_rng, Assignment, Moments, OutcomeOracle, Trace,
};
use crate::error::{Error, Result};
use crate::model::{gen_gnb, gen_hetero, HeteroSpec, Instance};
use crate::policies::{potential, potential_integral, StochasticBalance, C};

/// Largest accepted `|P - c D| / (1 + P)` after any step.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualLedger {
    pub c: f64,
    pub x_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    primal: Sum,
    dual: Sum,
    pub max_residual: f64,
    pub steps: usize,
}

impl DualLedger {
    pub fn new(inst: &Instance) -> Self {
        DualLedger {
            c: C,
            x_hat: vec![0.0; inst.n_servers()],
            y_hat: vec![0.0; inst.n_requests()],
            primal: Sum::default(),
            dual: Sum::default(),
            max_residual: 0.0,
            steps: 0,
        }
    }

    /// Expected matched weight accrued so far (`Σ w p` over assignments).
    pub fn primal(&self) -> f64 {
        self.primal.value()
    }

    /// Dual objective accumulated step by step.
    pub fn dual(&self) -> f64 {
        self.dual.value()
    }

    /// Dual objective recomputed from the variables: `Σ b_s x̂(s) + Σ ŷ(r)`.
    pub fn dual_from_variables(&self, inst: &Instance) -> f64 {
        let mut d = Sum::default();
        for (x, s) in self.x_hat.iter().zip(inst.servers()) {
            d.add(s.capacity as f64 * x);
        }
        for &y in &self.y_hat {
            d.add(y);
        }
        d.value()
    }

    fn residual(&self) -> f64 {
        let p = self.primal();
        (p - self.c * self.dual()).abs() / (1.0 + p)
    }

    /// Applies the update rules for one assignment and checks the identity.
    pub fn record(&mut self, inst: &Instance, a: &Assignment) -> Result<()> {
        let server = &inst.servers()[a.server];
        let b = server.capacity as f64;
        let wp = server.weight * a.probability;
        let f = potential(a.load_before, server.capacity);
        let dx = wp * f / (b * self.c);
        let y = wp * (1.0 - f) / self.c;
        self.x_hat[a.server] += dx;
        self.y_hat[a.request] = y;
        self.primal.add(wp);
        self.dual.add(b * dx);
        self.dual.add(y);
        self.steps += 1;
        let residual = self.residual();
        self.max_residual = self.max_residual.max(residual);
        if !(residual <= IDENTITY_TOL) {
            return Err(Error::Accounting {
                step: self.steps,
                residual,
            });
        }
        Ok(())
    }

    /// Checks `∫_{-1}^{l-1} f <= c b x̂ / w <= ∫_0^l f` for every server,
    /// with `l` its final load. Returns the largest relative violation.
    pub fn sandwich_violation(&self, inst: &Instance, loads: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((x, s), &l) in self.x_hat.iter().zip(inst.servers()).zip(loads) {
            let scaled = self.c * s.capacity as f64 * x / s.weight;
            let lower = potential_integral(-1.0, l - 1.0, s.capacity);
            let upper = potential_integral(0.0, l, s.capacity);
            let scale = 1.0 + upper.abs();
            worst = worst
                .max((lower - scaled) / scale)
                .max((scaled - upper) / scale);
        }
        worst
    }
}

/// Runs StochasticBalance once while maintaining the dual ledger.
pub fn audited_run(inst: &Instance, oracle: &mut OutcomeOracle) -> Result<(Trace, DualLedger)> {
    let mut ledger = DualLedger::new(inst);
    let mut failure = None;
    let trace = run_traced(inst, &StochasticBalance, oracle, |_, a| {
        if let (Some(a), None) = (a, &failure) {
            if let Err(e) = ledger.record(inst, a) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let closing = ledger.dual_from_variables(inst);
    let residual = (ledger.primal() - ledger.c * closing).abs() / (1.0 + ledger.primal());
    if !(residual <= IDENTITY_TOL) {
        return Err(Error::Accounting {
            step: ledger.steps,
            residual,
        });
    }
    Ok((trace, ledger))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeSlack {
    pub request: usize,
    pub server: usize,
    pub probability: f64,
    /// Mean of `p x̂(s) + ŷ(r)` over trials.
    pub estimate: f64,
    pub ci95: f64,
    /// `p w_s`, the right-hand side of the dual constraint.
    pub target: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackEstimate {
    pub trials: u64,
    pub edges: Vec<EdgeSlack>,
    /// Smallest `ratio` over edges (1 when there are none).
    pub min_ratio: f64,
    /// CI half-width of the minimizing edge's ratio.
    pub min_ratio_ci: f64,
}

impl SlackEstimate {
    /// `c · min_ratio`, the competitive ratio certified by weak duality.
    pub fn c_effective(&self) -> f64 {
        C * self.min_ratio
    }
}

/// Estimates `E[p x̂(s) + ŷ(r)] / (p w_s)` for every edge by Monte Carlo.
pub fn estimate_slack(
    inst: &Instance,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SlackEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if trials < 1000 {
        log::warn!("slack estimate from only {trials} trials");
    }
    let edges: Vec<_> = inst.edges().collect();
    let partials = run_chunked(trials, workers, |range| {
        let mut acc = vec![Moments::default(); edges.len()];
        for t in range {
            let mut oracle = OutcomeOracle::Lazy(trial_rng(seed, t));
            let (_, ledger) = audited_run(inst, &mut oracle)?;
            for (m, (r, e)) in acc.iter_mut().zip(&edges) {
                m.push(e.probability * ledger.x_hat[e.server] + ledger.y_hat[*r]);
            }
        }
        Ok(acc)
    })?;
    let mut acc = vec![Moments::default(); edges.len()];
    for part in &partials {
        for (a, m) in acc.iter_mut().zip(part) {
            a.merge(m);
        }
    }
    let out: Vec<EdgeSlack> = edges
        .iter()
        .zip(&acc)
        .map(|((r, e), m)| {
            let target = e.probability * inst.servers()[e.server].weight;
            EdgeSlack {
                request: *r,
                server: e.server,
                probability: e.probability,
                estimate: m.mean,
                ci95: m.ci95(),
                target,
                ratio: m.mean / target,
            }
        })
        .collect();
    let (min_ratio, min_ratio_ci) = out
        .iter()
        .map(|e| (e.ratio, e.ci95 / e.target))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((1.0, 0.0));
    Ok(SlackEstimate {
        trials,
        edges: out,
        min_ratio,
        min_ratio_ci,
    })
}

/// Instance family indexed by capacity, for [`epsilon_curve`].
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Gnb {
        n: usize,
        p: f64,
    },
    /// `b` is the smallest capacity; capacities range over `b..=spread*b`.
    Hetero {
        n: usize,
        spread: u32,
        p_range: (f64, f64),
        weight_range: (f64, f64),
        seed: u64,
    },
}

impl Family {
    pub fn instance(&self, b: u32) -> Result<Instance> {
        match *self {
            Family::Gnb { n, p } => gen_gnb(n, b, p),
            Family::Hetero {
                n,
                spread,
                p_range,
                weight_range,
                seed,
            } => gen_hetero(&HeteroSpec {
                n,
                b_min: b,
                spread,
                p_range,
                weight_range,
                seed,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub b: u32,
    pub min_ratio: f64,
    pub ci95: f64,
}

pub fn epsilon_curve(
    family: &Family,
    b_list: &[u32],
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<EpsilonRow>> {
    b_list
        .iter()
        .map(|&b| {
            let inst = family.instance(b)?;
            let est = estimate_slack(&inst, trials, seed, workers)?;
            Ok(EpsilonRow {
                b,
                min_ratio: est.min_ratio,
                ci95: est.min_ratio_ci,
            })
        })
        .collect()
}

/// True when each row's ratio is at least the previous one's, allowing for
/// both confidence intervals.
pub fn nondecreasing_up_to_ci(rows: &[EpsilonRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].min_ratio + w[1].ci95 >= w[0].min_ratio - w[0].ci95)
}
