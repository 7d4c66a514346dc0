//! MAP inference: `arg max_x θᵀφ(x)`.
//!
//! Three solvers share one tie-break rule (lowest label index, i.e. the
//! lexicographically smallest maximizer):
//!
//! * [`map_bruteforce`] enumerates every labeling. Exact, tiny instances only.
//! * [`map_elimination`] runs max-product variable elimination in reverse node
//!   order. Exact, and fast whenever the induced width of that order is small
//!   (grids up to a handful of columns).
//! * [`map_lbp`] is synchronous damped loopy max-product belief propagation.

mod bruteforce;
mod elimination;
mod lbp;

pub use bruteforce::{map_bruteforce, BRUTE_FORCE_LIMIT};
pub use elimination::{map_elimination, ELIMINATION_TABLE_LIMIT};
pub use lbp::{map_lbp, LbpConfig, Schedule};

use serde::{Deserialize, Serialize};

use crate::crf::{energy, inner_product, CrfGraph, Labeling, StatVector};
use crate::error::Result;

/// Slack allowed when testing the approximate-MAP condition.
pub const CONDITION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub labeling: Labeling,
    pub energy_value: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

/// Which MAP solver a sampler calls at every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Inference {
    BruteForce,
    Elimination,
    Lbp(LbpConfig),
}

impl Default for Inference {
    fn default() -> Self {
        Inference::Lbp(LbpConfig::default())
    }
}

impl Inference {
    pub fn run(&self, graph: &CrfGraph, theta: &StatVector) -> Result<MapResult> {
        match self {
            Inference::BruteForce => map_bruteforce(graph, theta),
            Inference::Elimination => map_elimination(graph, theta),
            Inference::Lbp(cfg) => map_lbp(graph, theta, cfg),
        }
    }
}

/// `θᵀμ ≤ θᵀφ(x)`: the condition under which a non-optimal sample still
/// carries the moment-matching guarantee.
pub fn check_herding_condition(
    graph: &CrfGraph,
    theta: &StatVector,
    mu: &StatVector,
    x: &Labeling,
) -> Result<bool> {
    let target = inner_product(theta, mu)?;
    let achieved = energy(graph, theta, x)?;
    Ok(target <= achieved + CONDITION_SLACK)
}
