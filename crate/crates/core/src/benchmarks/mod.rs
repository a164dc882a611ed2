//! Offline benchmarks: the fractional budgeted-allocation optimum (Opt) and
//! the clairvoyant sequential optimum (SOpt).

mod simplex;

use serde::Serialize;

pub use simplex::{DenseSimplex, SimplexSolution};

use crate::engine::ServerState;
use crate::error::{Error, Result};
use crate::model::{Instance, Request};
use crate::policies::Policy;

/// Edge limit for [`opt_fractional`].
pub const MAX_LP_EDGES: usize = 2500;
/// Limit on `Π (b_s + 1) · n_requests` for [`sopt_dp`].
pub const MAX_DP_STATES: u64 = 10_000_000;
pub const MAX_BRUTE_REQUESTS: usize = 4;
pub const MAX_BRUTE_SERVERS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeFlow {
    pub request: usize,
    pub server: usize,
    pub probability: f64,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub value: f64,
    pub flows: Vec<EdgeFlow>,
    /// Dual multiplier `x(s)` of each capacity constraint.
    pub server_duals: Vec<f64>,
    /// Dual multiplier `y(r)` of each request constraint.
    pub request_duals: Vec<f64>,
}

impl LpSolution {
    /// Largest violation of either constraint family (0 when feasible).
    pub fn max_violation(&self, inst: &Instance) -> f64 {
        let mut server_load = vec![0.0; inst.n_servers()];
        let mut request_mass = vec![0.0; inst.n_requests()];
        let mut worst: f64 = 0.0;
        for f in &self.flows {
            server_load[f.server] += f.probability * f.m;
            request_mass[f.request] += f.m;
            worst = worst.max(-f.m).max(f.m - 1.0);
        }
        for (l, s) in server_load.iter().zip(inst.servers()) {
            worst = worst.max(l - s.capacity as f64);
        }
        for m in request_mass {
            worst = worst.max(m - 1.0);
        }
        worst
    }
}

/// Solves `max Σ w_s p m(s,r)` subject to `Σ_r p m(s,r) <= b_s` and
/// `Σ_s m(s,r) <= 1`.
pub fn opt_fractional(inst: &Instance) -> Result<LpSolution> {
    let n_edges = inst.n_edges();
    if n_edges > MAX_LP_EDGES {
        return Err(Error::capacity(format!(
            "LP has {n_edges} edges, limit is {MAX_LP_EDGES}"
        )));
    }
    let ns = inst.n_servers();
    let nr = inst.n_requests();
    let edges: Vec<_> = inst.edges().collect();
    if edges.is_empty() {
        return Ok(LpSolution {
            value: 0.0,
            flows: Vec::new(),
            server_duals: vec![0.0; ns],
            request_duals: vec![0.0; nr],
        });
    }
    let rows = ns + nr;
    let mut a = vec![0.0; rows * n_edges];
    let mut c = Vec::with_capacity(n_edges);
    for (j, (r, e)) in edges.iter().enumerate() {
        a[e.server * n_edges + j] = e.probability;
        a[(ns + r) * n_edges + j] = 1.0;
        c.push(inst.servers()[e.server].weight * e.probability);
    }
    let b: Vec<f64> = inst
        .servers()
        .iter()
        .map(|s| s.capacity as f64)
        .chain(std::iter::repeat(1.0).take(nr))
        .collect();
    let sol = DenseSimplex::new(&c, &a, &b)?.solve()?;
    log::debug!("simplex finished after {} pivots", sol.pivots);
    let flows = edges
        .iter()
        .zip(&sol.primal)
        .map(|((r, e), &m)| EdgeFlow {
            request: *r,
            server: e.server,
            probability: e.probability,
            m: m.min(1.0),
        })
        .collect();
    Ok(LpSolution {
        value: sol.objective,
        flows,
        server_duals: sol.dual[..ns].to_vec(),
        request_duals: sol.dual[ns..].to_vec(),
    })
}

/// Optimal decisions of the clairvoyant policy, indexed by request and
/// success-count state.
#[derive(Clone, Debug)]
pub struct ActionTable {
    strides: Vec<usize>,
    n_states: usize,
    /// 0 means skip, otherwise `server + 1`.
    actions: Vec<u32>,
}

impl ActionTable {
    fn index(&self, successes: impl IntoIterator<Item = u32>) -> usize {
        successes
            .into_iter()
            .zip(&self.strides)
            .map(|(k, s)| k as usize * s)
            .sum()
    }

    /// Per-server success counts encoded by `state`.
    pub fn counts(&self, state: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.strides.len());
        for (i, &stride) in self.strides.iter().enumerate() {
            let next = self.strides.get(i + 1).copied().unwrap_or(self.n_states);
            out.push(((state % next) / stride) as u32);
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Writes `request,successes,action` rows, with counts joined by `;`
    /// and `-1` for skip.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["request", "successes", "action"])?;
        let n_requests = self.actions.len() / self.n_states.max(1);
        for r in 0..n_requests {
            for state in 0..self.n_states {
                let counts: Vec<String> = self.counts(state).iter().map(u32::to_string).collect();
                let action = match self.actions[r * self.n_states + state] {
                    0 => -1,
                    a => a as i64 - 1,
                };
                out.write_record([r.to_string(), counts.join(";"), action.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Server chosen for `request` given per-server success counts.
    pub fn action(&self, request: usize, successes: &[u32]) -> Option<usize> {
        let state = self.index(successes.iter().copied());
        match self.actions[request * self.n_states + state] {
            0 => None,
            a => Some(a as usize - 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DpValue {
    pub value: f64,
    pub actions: Option<ActionTable>,
}

/// Runs the clairvoyant optimum's action table as an online policy.
pub struct ClairvoyantPolicy<'a> {
    table: &'a ActionTable,
}

impl<'a> ClairvoyantPolicy<'a> {
    pub fn new(table: &'a ActionTable) -> Self {
        ClairvoyantPolicy { table }
    }
}

impl Policy for ClairvoyantPolicy<'_> {
    fn name(&self) -> &str {
        "sopt"
    }

    fn select(&self, request: &Request, servers: &[ServerState]) -> Option<usize> {
        let state = self.table.index(servers.iter().map(|s| s.successes()));
        match self.table.actions[request.id * self.table.n_states + state] {
            0 => None,
            a => Some(a as usize - 1),
        }
    }
}

/// Expected matched weight of the optimal sequential policy.
pub fn sopt_dp(inst: &Instance) -> Result<DpValue> {
    sopt_dp_impl(inst, false)
}

/// As [`sopt_dp`], also keeping the optimal action per state.
pub fn sopt_dp_with_actions(inst: &Instance) -> Result<DpValue> {
    sopt_dp_impl(inst, true)
}

fn sopt_dp_impl(inst: &Instance, keep_actions: bool) -> Result<DpValue> {
    let too_big = || {
        Error::capacity(format!(
            "DP state space exceeds {MAX_DP_STATES} (request count times product of b_s + 1)"
        ))
    };
    let mut strides = Vec::with_capacity(inst.n_servers());
    let mut n_states: u64 = 1;
    for s in inst.servers() {
        strides.push(n_states as usize);
        n_states = n_states
            .checked_mul(s.capacity as u64 + 1)
            .filter(|&v| v <= MAX_DP_STATES)
            .ok_or_else(too_big)?;
    }
    let total = n_states
        .checked_mul(inst.n_requests().max(1) as u64)
        .filter(|&v| v <= MAX_DP_STATES)
        .ok_or_else(too_big)?;
    let n_states = n_states as usize;
    let radix: Vec<usize> = inst
        .servers()
        .iter()
        .map(|s| s.capacity as usize + 1)
        .collect();
    let mut actions = if keep_actions {
        vec![0u32; total as usize]
    } else {
        Vec::new()
    };

    let mut next = vec![0.0f64; n_states];
    let mut cur = vec![0.0f64; n_states];
    for request in inst.requests().iter().rev() {
        for state in 0..n_states {
            let stay = next[state];
            let mut best = stay;
            let mut choice = 0u32;
            for e in &request.edges {
                let s = e.server;
                let count = (state / strides[s]) % radix[s];
                if count + 1 >= radix[s] {
                    continue;
                }
                let w = inst.servers()[s].weight;
                let p = e.probability;
                let v = p * (w + next[state + strides[s]]) + (1.0 - p) * stay;
                // assigning wins ties against skip; earlier servers win ties
                if v > best || (choice == 0 && v == best) {
                    best = v;
                    choice = s as u32 + 1;
                }
            }
            cur[state] = best;
            if keep_actions {
                actions[request.id * n_states + state] = choice;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(DpValue {
        value: next[0],
        actions: keep_actions.then_some(ActionTable {
            strides,
            n_states,
            actions,
        }),
    })
}

/// SOpt by expectimax over full outcome histories, with no state merging.
///
/// A deterministic policy is a decision tree whose value is linear in the
/// values of its subtrees, so the best tree is assembled from the best
/// subtree at each history node.
pub fn sopt_bruteforce(inst: &Instance) -> Result<f64> {
    if inst.n_requests() > MAX_BRUTE_REQUESTS || inst.n_servers() > MAX_BRUTE_SERVERS {
        return Err(Error::capacity(format!(
            "brute force is limited to {MAX_BRUTE_REQUESTS} requests and {MAX_BRUTE_SERVERS} servers"
        )));
    }
    let mut history = Vec::with_capacity(inst.n_requests());
    Ok(best_continuation(inst, &mut history))
}

/// `history[t]` is the outcome at request `t`: the server tried, if any, and
/// whether it succeeded.
fn best_continuation(inst: &Instance, history: &mut Vec<(Option<usize>, bool)>) -> f64 {
    let t = history.len();
    if t == inst.n_requests() {
        return 0.0;
    }
    history.push((None, false));
    let mut best = best_continuation(inst, history);
    history.pop();
    for e in &inst.requests()[t].edges {
        let used = history
            .iter()
            .filter(|(s, ok)| *ok && *s == Some(e.server))
            .count();
        let server = &inst.servers()[e.server];
        if used >= server.capacity as usize {
            continue;
        }
        history.push((Some(e.server), true));
        let hit = best_continuation(inst, history);
        history.pop();
        history.push((Some(e.server), false));
        let miss = best_continuation(inst, history);
        history.pop();
        let v = e.probability * (server.weight + hit) + (1.0 - e.probability) * miss;
        best = best.max(v);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{monte_carlo, McConfig};
    use crate::model::{gen_gnb, gen_random, vertex_split, Edge, Metadata, RandomSpec, Server};
    use crate::policies::PolicyKind;
    use proptest::prelude::*;

    fn inst(servers: Vec<Server>, requests: Vec<Vec<(usize, f64)>>) -> Instance {
        let requests = requests
            .into_iter()
            .map(|r| r.into_iter().map(|(s, p)| Edge::new(s, p)).collect())
            .collect();
        Instance::new(servers, requests, Metadata::new("test")).unwrap()
    }

    fn tiny(seed: u64, max_requests: usize) -> Instance {
        gen_random(&RandomSpec {
            n_servers: 1 + (seed % 3) as usize,
            n_requests: 1 + (seed / 3 % max_requests as u64) as usize,
            edge_density: 0.6,
            p_range: (0.05, 1.0),
            cap_range: (1, 2),
            weight_range: (0.5, 2.0),
            seed,
        })
        .unwrap()
    }

    /// Literal enumeration of every deterministic decision tree, returning
    /// the value of each.
    fn all_tree_values(inst: &Instance, t: usize, used: &mut Vec<u32>) -> Vec<f64> {
        if t == inst.n_requests() {
            return vec![0.0];
        }
        let mut out = all_tree_values(inst, t + 1, used);
        for e in &inst.requests()[t].edges {
            let s = e.server;
            let server = &inst.servers()[s];
            if used[s] >= server.capacity {
                continue;
            }
            let misses = all_tree_values(inst, t + 1, used);
            used[s] += 1;
            let hits = all_tree_values(inst, t + 1, used);
            used[s] -= 1;
            for h in &hits {
                for m in &misses {
                    out.push(e.probability * (server.weight + h) + (1.0 - e.probability) * m);
                }
            }
        }
        out
    }

    #[test]
    fn lp_on_gnb_is_nb() {
        for (n, b, p) in [(2, 1, 0.5), (3, 2, 0.1), (4, 3, 0.25)] {
            let g = gen_gnb(n, b, p).unwrap();
            let sol = opt_fractional(&g).unwrap();
            assert!(
                (sol.value - (n as f64 * b as f64)).abs() < 1e-9,
                "{n} {b} {p}: {}",
                sol.value
            );
            assert!(sol.max_violation(&g) < 1e-9);
        }
    }

    #[test]
    fn lp_small_cases() {
        let empty = inst(vec![Server::new(1)], vec![vec![], vec![]]);
        assert_eq!(opt_fractional(&empty).unwrap().value, 0.0);

        let three = inst(vec![Server::new(1)], vec![vec![(0, 0.5)]; 3]);
        let sol = opt_fractional(&three).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!(sol.max_violation(&three) < 1e-9);
    }

    #[test]
    fn lp_size_guard() {
        let g = gen_gnb(50, 1, 0.01).unwrap();
        assert!(g.n_edges() > MAX_LP_EDGES);
        assert!(matches!(opt_fractional(&g), Err(Error::Capacity(_))));
    }

    #[test]
    fn dp_small_cases() {
        let two = inst(vec![Server::new(1)], vec![vec![(0, 0.5)]; 2]);
        assert!((sopt_dp(&two).unwrap().value - 0.75).abs() < 1e-15);
        assert!((sopt_bruteforce(&two).unwrap() - 0.75).abs() < 1e-15);

        let pick = inst(
            vec![Server::new(1), Server::new(1)],
            vec![vec![(0, 0.3), (1, 0.7)]],
        );
        assert!((sopt_dp(&pick).unwrap().value - 0.7).abs() < 1e-15);

        let empty = inst(vec![Server::new(2)], vec![vec![]]);
        assert_eq!(sopt_dp(&empty).unwrap().value, 0.0);

        let weighted = inst(
            vec![Server::weighted(1, 3.0), Server::weighted(1, 1.0)],
            vec![vec![(0, 0.2), (1, 0.5)]],
        );
        assert!((sopt_bruteforce(&weighted).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn oracles_agree_on_two_by_two() {
        let g = inst(
            vec![Server::new(1), Server::new(1)],
            vec![vec![(0, 0.5), (1, 0.5)]; 2],
        );
        let dp = sopt_dp(&g).unwrap().value;
        let bf = sopt_bruteforce(&g).unwrap();
        assert!((dp - bf).abs() < 1e-12);
        // a free server is always left for request 1
        assert!((dp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bruteforce_matches_tree_enumeration() {
        for seed in 0..40 {
            let g = tiny(seed, 3);
            if g.n_servers() > 2 {
                continue;
            }
            let trees = all_tree_values(&g, 0, &mut vec![0; g.n_servers()]);
            let best = trees.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (best - sopt_bruteforce(&g).unwrap()).abs() < 1e-12,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn dp_matches_bruteforce_and_lp() {
        for seed in 0..100 {
            let g = tiny(seed, 4);
            let dp = sopt_dp(&g).unwrap().value;
            let bf = sopt_bruteforce(&g).unwrap();
            assert!((dp - bf).abs() < 1e-10, "seed {seed}: {dp} vs {bf}");
            let lp = opt_fractional(&g).unwrap();
            assert!(dp <= lp.value + 1e-9, "seed {seed}");
            assert!(lp.max_violation(&g) < 1e-9);
        }
    }

    #[test]
    fn bruteforce_guard() {
        let g = inst(vec![Server::new(1)], vec![vec![(0, 0.5)]; 5]);
        assert!(matches!(sopt_bruteforce(&g), Err(Error::Capacity(_))));
    }

    #[test]
    fn dp_guard() {
        let g = gen_gnb(30, 3, 0.5).unwrap();
        assert!(matches!(sopt_dp(&g), Err(Error::Capacity(_))));
    }

    #[test]
    fn dp_invariant_under_split() {
        for (n, b, p) in [(2, 2, 0.5), (2, 3, 0.5), (3, 2, 0.5)] {
            let g = gen_gnb(n, b, p).unwrap();
            let a = sopt_dp(&g).unwrap().value;
            let s = sopt_dp(&vertex_split(&g)).unwrap().value;
            assert!((a - s).abs() < 1e-10, "{n} {b}: {a} vs {s}");
        }
    }

    #[test]
    fn action_table_achieves_value() {
        let g = gen_gnb(2, 2, 0.5).unwrap();
        let dp = sopt_dp_with_actions(&g).unwrap();
        let policy = ClairvoyantPolicy::new(dp.actions.as_ref().unwrap());
        let stats = monte_carlo(&g, &policy, &McConfig::new(40_000, 3)).unwrap();
        let sd = (stats.variance / stats.trials as f64).sqrt();
        assert!(
            (stats.mean - dp.value).abs() < 4.0 * sd,
            "{} vs {}",
            stats.mean,
            dp.value
        );
        for kind in PolicyKind::ALL {
            let s = monte_carlo(&g, &kind, &McConfig::new(40_000, 3)).unwrap();
            let sd = (s.variance / s.trials as f64).sqrt();
            assert!(
                s.mean <= dp.value + 4.0 * sd,
                "{kind}: {} > {}",
                s.mean,
                dp.value
            );
        }
    }

    #[test]
    fn action_table_export() {
        let g = inst(
            vec![Server::new(1), Server::new(2)],
            vec![vec![(0, 0.5), (1, 0.5)]],
        );
        let dp = sopt_dp_with_actions(&g).unwrap();
        let table = dp.actions.unwrap();
        assert_eq!(table.n_states(), 6);
        assert_eq!(table.counts(5), vec![1, 2]);
        assert_eq!(table.counts(3), vec![1, 1]);
        assert_eq!(table.action(0, &[1, 2]), None);
        assert_eq!(table.action(0, &[0, 0]), Some(0));
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("0,0;0,0"));
        assert_eq!(text.lines().last(), Some("0,1;2,-1"));
    }

    #[test]
    fn lp_duals_certify_optimality() {
        for seed in 0..30 {
            let g = gen_random(&RandomSpec {
                n_servers: 4,
                n_requests: 12,
                edge_density: 0.5,
                p_range: (0.05, 1.0),
                cap_range: (1, 3),
                weight_range: (0.5, 2.0),
                seed,
            })
            .unwrap();
            let sol = opt_fractional(&g).unwrap();
            for (r, e) in g.edges() {
                let w = g.servers()[e.server].weight;
                let lhs = e.probability * sol.server_duals[e.server] + sol.request_duals[r];
                assert!(lhs >= w * e.probability - 1e-9, "seed {seed}");
            }
            let dual: f64 = g
                .servers()
                .iter()
                .zip(&sol.server_duals)
                .map(|(s, x)| s.capacity as f64 * x)
                .sum::<f64>()
                + sol.request_duals.iter().sum::<f64>();
            assert!((dual - sol.value).abs() < 1e-8, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn single_request_value(ps in proptest::collection::vec(0.01f64..1.0, 1..4),
                                ws in proptest::collection::vec(0.5f64..2.0, 3)) {
            let servers: Vec<Server> = ws.iter().map(|&w| Server::weighted(1, w)).collect();
            let edges: Vec<(usize, f64)> = ps.iter().copied().enumerate().collect();
            let g = inst(servers, vec![edges]);
            let want = ps.iter().zip(&ws).map(|(p, w)| p * w).fold(0.0, f64::max);
            prop_assert!((sopt_bruteforce(&g).unwrap() - want).abs() < 1e-15);
            prop_assert!((sopt_dp(&g).unwrap().value - want).abs() < 1e-15);
        }
    }
}
