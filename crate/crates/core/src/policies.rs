//! Online assignment policies.
//!
//! [`StochasticBalance`] assigns a request to the neighbor with remaining
//! capacity maximizing `w_s * p_{s,r} * (1 - f_s(l_s))`, where `l_s` is the
//! server's load and `f_s` its exponential potential. With unit weights and
//! uniform probabilities and capacities this is "least loaded neighbor".
//! [`Greedy`] picks the lowest-index neighbor with remaining capacity.
//!
//! Both break ties towards the lowest server id and never skip a request
//! that has an eligible neighbor.

use std::fmt;
use std::str::FromStr;

use crate::engine::ServerState;
use crate::error::Error;
use crate::model::Request;

/// Competitive ratio targeted by the potential, `1 - 1/e`.
pub const C: f64 = 1.0 - 1.0 / std::f64::consts::E;

/// `f_s(x) = exp(x / b_s - 1)` for `x <= b_s`, and `1` above.
pub fn potential(load: f64, capacity: u32) -> f64 {
    let b = capacity as f64;
    if load <= b {
        (load / b - 1.0).exp()
    } else {
        1.0
    }
}

/// `∫_from^to f_s(x) dx` for `from <= to`. Also defined for negative
/// arguments, where `f_s` keeps its exponential form.
pub fn potential_integral(from: f64, to: f64, capacity: u32) -> f64 {
    debug_assert!(from <= to);
    let b = capacity as f64;
    let antiderivative = |x: f64| {
        if x <= b {
            b * (x / b - 1.0).exp()
        } else {
            b + (x - b)
        }
    };
    antiderivative(to) - antiderivative(from)
}

pub trait Policy: Sync {
    fn name(&self) -> &str;

    /// Chooses a server for `request` given the current server states, or
    /// `None` to leave it unassigned. Must return an adjacent server with
    /// remaining capacity.
    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize> {
        (**self).select(request, states)
    }
}

/// Generalized StochasticBalance, covering the variable-capacity and
/// vertex-weighted forms.
#[derive(Clone, Copy, Debug, Default)]
pub struct StochasticBalance;

impl StochasticBalance {
    pub fn score(p: f64, state: &ServerState) -> f64 {
        state.weight() * p * (1.0 - state.potential())
    }
}

impl Policy for StochasticBalance {
    fn name(&self) -> &str {
        "sbal"
    }

    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in &request.edges {
            let st = &states[e.server];
            if !st.has_capacity() {
                continue;
            }
            let score = Self::score(e.probability, st);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((e.server, score));
            }
        }
        best.map(|(s, _)| s)
    }
}

/// StochasticBalance with ties broken by the smallest `rank[s]` instead of
/// the smallest id. A uniformly random rank makes servers with identical
/// neighborhoods exchangeable.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedBalance {
    rank: Vec<u32>,
}

impl RankedBalance {
    pub fn new(rank: Vec<u32>) -> Self {
        RankedBalance { rank }
    }
}

impl Policy for RankedBalance {
    fn name(&self) -> &str {
        "sbal-ranked"
    }

    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in &request.edges {
            let st = &states[e.server];
            if !st.has_capacity() {
                continue;
            }
            let score = StochasticBalance::score(e.probability, st);
            let better = match best {
                None => true,
                Some((b, s)) => score > s || (score == s && self.rank[e.server] < self.rank[b]),
            };
            if better {
                best = Some((e.server, score));
            }
        }
        best.map(|(s, _)| s)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Greedy;

impl Policy for Greedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize> {
        request
            .edges
            .iter()
            .find(|e| states[e.server].has_capacity())
            .map(|e| e.server)
    }
}

/// The shipped policies, addressable by CLI name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    StochasticBalance,
    Greedy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::StochasticBalance, PolicyKind::Greedy];
}

impl Policy for PolicyKind {
    fn name(&self) -> &str {
        match self {
            PolicyKind::StochasticBalance => StochasticBalance.name(),
            PolicyKind::Greedy => Greedy.name(),
        }
    }

    fn select(&self, request: &Request, states: &[ServerState]) -> Option<usize> {
        match self {
            PolicyKind::StochasticBalance => StochasticBalance.select(request, states),
            PolicyKind::Greedy => Greedy.select(request, states),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for PolicyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sbal" => Ok(PolicyKind::StochasticBalance),
            "greedy" => Ok(PolicyKind::Greedy),
            other => Err(Error::InvalidParameter(format!(
                "unknown policy '{other}' (expected sbal or greedy)"
            ))),
        }
    }
}
