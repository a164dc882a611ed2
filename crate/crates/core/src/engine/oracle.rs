use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Instance;

/// A realization of every edge outcome, indexed by `(request, edge index)`.
/// Outcomes do not depend on which edges a policy ends up querying.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeTable {
    outcomes: Vec<Vec<bool>>,
}

impl OutcomeTable {
    /// Draws one Bernoulli per edge, in request order then edge order.
    pub fn draw(inst: &Instance, seed: u64) -> Self {
        Self::draw_with(inst, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn draw_with(inst: &Instance, rng: &mut ChaCha8Rng) -> Self {
        let outcomes = inst
            .requests()
            .iter()
            .map(|r| {
                r.edges
                    .iter()
                    .map(|e| rng.gen::<f64>() < e.probability)
                    .collect()
            })
            .collect();
        OutcomeTable { outcomes }
    }

    pub fn from_rows(outcomes: Vec<Vec<bool>>) -> Self {
        OutcomeTable { outcomes }
    }

    pub fn get(&self, request: usize, edge_index: usize) -> bool {
        self.outcomes[request][edge_index]
    }
}

/// Source of assignment outcomes for a run.
#[derive(Clone, Debug)]
pub enum OutcomeOracle {
    /// Draws a fresh Bernoulli each time an assignment is made.
    Lazy(ChaCha8Rng),
    /// Looks outcomes up in a pre-drawn table.
    Table(OutcomeTable),
    /// Every assignment succeeds (`true`) or fails (`false`).
    Constant(bool),
}

impl OutcomeOracle {
    pub fn lazy(seed: u64) -> Self {
        OutcomeOracle::Lazy(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn table(table: OutcomeTable) -> Self {
        OutcomeOracle::Table(table)
    }

    pub fn always(success: bool) -> Self {
        OutcomeOracle::Constant(success)
    }

    pub(crate) fn draw(&mut self, request: usize, edge_index: usize, probability: f64) -> bool {
        match self {
            OutcomeOracle::Lazy(rng) => rng.gen::<f64>() < probability,
            OutcomeOracle::Table(t) => t.get(request, edge_index),
            OutcomeOracle::Constant(v) => *v,
        }
    }
}
