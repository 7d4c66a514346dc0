use crate::crf::{energy_unchecked, CrfGraph, Labeling, StatVector};
use crate::error::{CrfError, Result};

use super::MapResult;

/// Largest `|L|^N` the exhaustive solver accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Exhaustive maximization in lexicographic order; the first maximizer seen
/// (the lexicographically smallest) wins ties.
pub fn map_bruteforce(graph: &CrfGraph, theta: &StatVector) -> Result<MapResult> {
    theta.check_graph(graph)?;
    let n = graph.node_count();
    let l = theta.num_labels();
    let states = (l as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if states > BRUTE_FORCE_LIMIT {
        return Err(CrfError::Capacity {
            required: states,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut x = vec![0usize; n];
    let mut best = x.clone();
    let mut best_energy = energy_unchecked(graph, theta, &x);
    // odometer: the last node varies fastest
    loop {
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(MapResult {
                    labeling: Labeling::new(best),
                    energy_value: best_energy,
                    converged: true,
                    iterations_used: 1,
                });
            }
            pos -= 1;
            x[pos] += 1;
            if x[pos] < l {
                break;
            }
            x[pos] = 0;
        }
        let e = energy_unchecked(graph, theta, &x);
        if e > best_energy {
            best_energy = e;
            best.copy_from_slice(&x);
        }
    }
}
