//! The online simulation loop and Monte Carlo aggregation.

mod montecarlo;
mod oracle;
mod trace;

pub use montecarlo::{
    monte_carlo, monte_carlo_with, round_successes, trial_rng, McConfig, Moments, RoundHistogram,
    Stats,
};
pub use oracle::{OutcomeOracle, OutcomeTable};
pub use trace::{ServerOutcome, Step, Trace};

pub(crate) use montecarlo::run_chunked;

use crate::error::{Error, Result};
use crate::model::{Instance, Server};
use crate::policies::{potential, Policy};

/// Mutable per-run record of one server.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    load: f64,
    successes: u32,
    capacity: u32,
    weight: f64,
    potential: f64,
}

impl ServerState {
    pub fn new(server: &Server) -> Self {
        ServerState {
            load: 0.0,
            successes: 0,
            capacity: server.capacity,
            weight: server.weight,
            potential: potential(0.0, server.capacity),
        }
    }

    /// Sum of probabilities of all edges assigned to this server so far,
    /// whether or not they succeeded.
    pub fn load(&self) -> f64 {
        self.load
    }

    pub fn successes(&self) -> u32 {
        self.successes
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn has_capacity(&self) -> bool {
        self.successes < self.capacity
    }

    /// `f_s(load)`, cached.
    pub fn potential(&self) -> f64 {
        self.potential
    }

    pub fn set_load(&mut self, load: f64) {
        self.load = load;
        self.potential = potential(load, self.capacity);
    }

    pub fn set_successes(&mut self, successes: u32) {
        self.successes = successes;
    }

    fn record(&mut self, probability: f64, success: bool) {
        self.set_load(self.load + probability);
        if success {
            self.successes += 1;
        }
    }
}

/// One assignment made during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    pub request: usize,
    pub server: usize,
    pub probability: f64,
    pub load_before: f64,
    pub success: bool,
}

/// Final state of a run without the per-request log.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub states: Vec<ServerState>,
    pub matched_weight: f64,
}

/// Runs `policy` over the requests of `inst` in arrival order. The observer
/// sees every request with its assignment (if any) after states are updated.
pub fn simulate<F>(
    inst: &Instance,
    policy: &(impl Policy + ?Sized),
    oracle: &mut OutcomeOracle,
    mut observe: F,
) -> Result<RunSummary>
where
    F: FnMut(usize, Option<&Assignment>),
{
    let mut states: Vec<ServerState> = inst.servers().iter().map(ServerState::new).collect();
    let mut matched_weight = 0.0;
    for request in inst.requests() {
        let Some(server) = policy.select(request, &states) else {
            observe(request.id, None);
            continue;
        };
        let Ok(edge_index) = request.edges.binary_search_by_key(&server, |e| e.server) else {
            return Err(Error::ContractViolation {
                request: request.id,
                message: format!("{} chose non-adjacent server {server}", policy.name()),
            });
        };
        let state = &mut states[server];
        if !state.has_capacity() {
            return Err(Error::ContractViolation {
                request: request.id,
                message: format!("{} chose full server {server}", policy.name()),
            });
        }
        let probability = request.edges[edge_index].probability;
        let success = oracle.draw(request.id, edge_index, probability);
        let load_before = state.load;
        state.record(probability, success);
        if success {
            matched_weight += state.weight;
        }
        observe(
            request.id,
            Some(&Assignment {
                request: request.id,
                server,
                probability,
                load_before,
                success,
            }),
        );
    }
    Ok(RunSummary {
        states,
        matched_weight,
    })
}

/// Runs `policy` once and records the full [`Trace`].
pub fn run_online(
    inst: &Instance,
    policy: &(impl Policy + ?Sized),
    oracle: &mut OutcomeOracle,
) -> Result<Trace> {
    run_traced(inst, policy, oracle, |_, _| {})
}

/// As [`run_online`], also passing every step to `observe`.
pub fn run_traced<F>(
    inst: &Instance,
    policy: &(impl Policy + ?Sized),
    oracle: &mut OutcomeOracle,
    mut observe: F,
) -> Result<Trace>
where
    F: FnMut(usize, Option<&Assignment>),
{
    let mut steps = Vec::with_capacity(inst.n_requests());
    let summary = simulate(inst, policy, oracle, |request, a| {
        observe(request, a);
        steps.push(match a {
            Some(a) => Step {
                request,
                server: Some(a.server),
                success: a.success,
                load_before: a.load_before,
            },
            None => Step {
                request,
                server: None,
                success: false,
                load_before: 0.0,
            },
        })
    })?;
    Ok(Trace {
        steps,
        servers: summary
            .states
            .iter()
            .map(|s| ServerOutcome {
                load: s.load,
                successes: s.successes,
            })
            .collect(),
        matched_weight: summary.matched_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_gnb, gen_random, Edge, Metadata, RandomSpec, Request};
    use crate::policies::{Greedy, PolicyKind, StochasticBalance};
    use proptest::prelude::*;

    struct Rogue(usize);

    impl Policy for Rogue {
        fn name(&self) -> &str {
            "rogue"
        }
        fn select(&self, _: &Request, _: &[ServerState]) -> Option<usize> {
            Some(self.0)
        }
    }

    fn two_by_three() -> Instance {
        Instance::new(
            vec![Server::new(1), Server::new(2)],
            vec![
                vec![Edge::new(0, 1.0), Edge::new(1, 1.0)],
                vec![Edge::new(0, 1.0)],
                vec![Edge::new(0, 1.0), Edge::new(1, 1.0)],
                vec![Edge::new(1, 1.0)],
            ],
            Metadata::new("manual"),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_outcomes_with_p_one() {
        let inst = two_by_three();
        // greedy: r0 -> s0 (fills), r1 -> none, r2 -> s1, r3 -> s1 (fills)
        let t = run_online(&inst, &Greedy, &mut OutcomeOracle::lazy(1)).unwrap();
        assert_eq!(t.matched_weight, 3.0);
        assert_eq!(t.steps[1].server, None);
        assert_eq!(t.servers[1].successes, 2);
        t.verify(&inst).unwrap();
    }

    #[test]
    fn forced_failures_keep_assigning() {
        let inst = gen_gnb(2, 1, 0.5).unwrap();
        for policy in PolicyKind::ALL {
            let t = run_online(&inst, &policy, &mut OutcomeOracle::always(false)).unwrap();
            assert_eq!(t.matched_weight, 0.0);
            assert!(t.steps.iter().all(|s| s.server.is_some()));
        }
    }

    #[test]
    fn traces_reproducible() {
        let inst = gen_gnb(2, 1, 0.5).unwrap();
        let a = run_online(&inst, &StochasticBalance, &mut OutcomeOracle::lazy(42)).unwrap();
        let b = run_online(&inst, &StochasticBalance, &mut OutcomeOracle::lazy(42)).unwrap();
        assert_eq!(a, b);
        a.verify(&inst).unwrap();
    }

    #[test]
    fn contract_violations() {
        let inst = two_by_three();
        let err = run_online(&inst, &Rogue(1), &mut OutcomeOracle::lazy(0)).unwrap_err();
        assert!(matches!(err, Error::ContractViolation { request: 1, .. }));
        let err = run_online(&inst, &Rogue(0), &mut OutcomeOracle::always(true)).unwrap_err();
        assert!(matches!(err, Error::ContractViolation { request: 1, .. }));
    }

    #[test]
    fn predrawn_coupling_on_shared_prefix() {
        // greedy and sbal both send request 0 to s0 (tie-break on equal loads)
        let inst = gen_gnb(3, 2, 0.25).unwrap();
        let table = OutcomeTable::draw(&inst, 9);
        let a = run_online(&inst, &Greedy, &mut OutcomeOracle::table(table.clone())).unwrap();
        let b = run_online(&inst, &StochasticBalance, &mut OutcomeOracle::table(table)).unwrap();
        let prefix = a
            .steps
            .iter()
            .zip(&b.steps)
            .take_while(|(x, y)| x.server == y.server)
            .count();
        assert!(prefix >= 1);
        for (x, y) in a.steps.iter().zip(&b.steps).take(prefix) {
            assert_eq!(x.success, y.success);
        }
    }

    fn random_instance(seed: u64) -> Instance {
        gen_random(&RandomSpec {
            n_servers: 4,
            n_requests: 30,
            edge_density: 0.5,
            p_range: (0.05, 1.0),
            cap_range: (1, 4),
            weight_range: (0.5, 2.0),
            seed,
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn run_invariants(seed in any::<u64>(), oracle_seed in any::<u64>(), greedy in any::<bool>()) {
            let inst = random_instance(seed);
            let policy = if greedy { PolicyKind::Greedy } else { PolicyKind::StochasticBalance };
            let t = run_online(&inst, &policy, &mut OutcomeOracle::lazy(oracle_seed)).unwrap();
            t.verify(&inst).unwrap();

            // opportunism and capacity, replayed step by step
            let mut succ = vec![0u32; inst.n_servers()];
            let mut load = vec![0.0f64; inst.n_servers()];
            for step in &t.steps {
                let r = &inst.requests()[step.request];
                let eligible = r.edges.iter().any(|e| succ[e.server] < inst.servers()[e.server].capacity);
                prop_assert_eq!(eligible, step.server.is_some());
                if let Some(s) = step.server {
                    load[s] += r.edge_to(s).unwrap().probability;
                    succ[s] += step.success as u32;
                    prop_assert!(succ[s] <= inst.servers()[s].capacity);
                }
            }
            for (s, out) in t.servers.iter().enumerate() {
                prop_assert!((out.load - load[s]).abs() <= 1e-12);
            }
        }
    }
}
