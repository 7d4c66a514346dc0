use crate::crf::{energy_unchecked, CrfGraph, Labeling, StatVector};
use crate::error::{CrfError, Result};

use super::MapResult;

/// Largest intermediate table (entries) the eliminator will allocate.
pub const ELIMINATION_TABLE_LIMIT: u128 = 10_000_000;

/// Log-domain table over an ascending list of variables; the first variable
/// is the most significant digit of the flat index.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    /// Per-position stride of this factor's index inside an assignment over
    /// `scope` (a superset of `self.vars`).
    fn strides_in(&self, scope: &[usize], num_labels: usize) -> Vec<usize> {
        let mut strides = vec![0; scope.len()];
        let mut s = 1;
        for &v in self.vars.iter().rev() {
            let p = scope.binary_search(&v).expect("factor scope is contained in bucket scope");
            strides[p] = s;
            s *= num_labels;
        }
        strides
    }
}

/// Walk every assignment over a scope of `len` variables in index order,
/// keeping the flat index of each tracked factor in sync.
fn for_each_assignment(
    len: usize,
    num_labels: usize,
    strides: &[Vec<usize>],
    mut visit: impl FnMut(usize, &[usize]),
) {
    let total = num_labels.pow(len as u32);
    let mut digits = vec![0usize; len];
    let mut idx = vec![0usize; strides.len()];
    for a in 0..total {
        visit(a, &idx);
        if a + 1 == total {
            break;
        }
        let mut p = len;
        loop {
            p -= 1;
            if digits[p] + 1 < num_labels {
                digits[p] += 1;
                for (k, st) in strides.iter().enumerate() {
                    idx[k] += st[p];
                }
                break;
            }
            for (k, st) in strides.iter().enumerate() {
                idx[k] -= (num_labels - 1) * st[p];
            }
            digits[p] = 0;
        }
    }
}

/// Exact MAP by max-product variable elimination, eliminating nodes from the
/// highest index down and decoding from node 0 up. Choosing the lowest
/// maximizing label at each decode step yields the lexicographically smallest
/// maximizer, matching [`super::map_bruteforce`].
pub fn map_elimination(graph: &CrfGraph, theta: &StatVector) -> Result<MapResult> {
    theta.check_graph(graph)?;
    let n = graph.node_count();
    let l = theta.num_labels();

    let mut active: Vec<Factor> = Vec::with_capacity(n + graph.edge_count());
    for i in 0..n {
        active.push(Factor {
            vars: vec![i],
            values: theta.unary_block(i).to_vec(),
        });
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let mut values = Vec::with_capacity(l * l);
        for a in 0..l {
            for b in 0..l {
                values.push(theta.pair_value(e, a, b));
            }
        }
        active.push(Factor {
            vars: vec![i, j],
            values,
        });
    }

    // bucket[v] = combined table over its scope, kept for decoding
    let mut buckets: Vec<Option<Factor>> = vec![None; n];
    for v in (0..n).rev() {
        let (bucket, rest): (Vec<Factor>, Vec<Factor>) =
            active.into_iter().partition(|f| f.vars.binary_search(&v).is_ok());
        active = rest;

        let mut scope: Vec<usize> = bucket.iter().flat_map(|f| f.vars.iter().copied()).collect();
        scope.sort_unstable();
        scope.dedup();
        let size = (l as u128).checked_pow(scope.len() as u32).unwrap_or(u128::MAX);
        if size > ELIMINATION_TABLE_LIMIT {
            return Err(CrfError::Capacity {
                required: size,
                limit: ELIMINATION_TABLE_LIMIT,
            });
        }

        let strides: Vec<Vec<usize>> = bucket.iter().map(|f| f.strides_in(&scope, l)).collect();
        let mut combined = vec![0.0; size as usize];
        for_each_assignment(scope.len(), l, &strides, |a, idx| {
            let mut s = 0.0;
            for (f, &k) in bucket.iter().zip(idx) {
                s += f.values[k];
            }
            combined[a] = s;
        });
        let combined = Factor {
            vars: scope.clone(),
            values: combined,
        };

        let reduced_vars: Vec<usize> = scope.iter().copied().filter(|&u| u != v).collect();
        let mut reduced = Factor {
            vars: reduced_vars,
            values: vec![f64::NEG_INFINITY; l.pow(scope.len() as u32 - 1)],
        };
        let to_reduced = reduced.strides_in(&scope, l);
        for_each_assignment(scope.len(), l, &[to_reduced], |a, idx| {
            let slot = &mut reduced.values[idx[0]];
            if combined.values[a] > *slot {
                *slot = combined.values[a];
            }
        });
        if !reduced.vars.is_empty() {
            active.push(reduced);
        }
        buckets[v] = Some(combined);
    }

    let mut x = vec![0usize; n];
    for v in 0..n {
        let bucket = buckets[v].as_ref().expect("every node owns a bucket");
        let mut base = 0;
        let mut v_stride = 0;
        let mut s = 1;
        for &u in bucket.vars.iter().rev() {
            if u == v {
                v_stride = s;
            } else {
                base += x[u] * s;
            }
            s *= l;
        }
        let mut best = 0;
        let mut best_value = bucket.values[base];
        for label in 1..l {
            let value = bucket.values[base + label * v_stride];
            if value > best_value {
                best_value = value;
                best = label;
            }
        }
        x[v] = best;
    }

    let energy_value = energy_unchecked(graph, theta, &x);
    Ok(MapResult {
        labeling: Labeling::new(x),
        energy_value,
        converged: true,
        iterations_used: 1,
    })
}
