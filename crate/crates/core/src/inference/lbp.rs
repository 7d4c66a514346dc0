use serde::{Deserialize, Serialize};

use crate::crf::{energy_unchecked, CrfGraph, Labeling, StatVector};
use crate::error::{CrfError, Result};

use super::MapResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    #[default]
    Synchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbpConfig {
    pub max_iterations: usize,
    /// Weight on the previous message, in `[0, 1)`.
    pub damping: f64,
    /// Stop once the L∞ message change falls below this.
    pub convergence_tol: f64,
    pub schedule: Schedule,
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig {
            max_iterations: 200,
            damping: 0.5,
            convergence_tol: 1e-6,
            schedule: Schedule::Synchronous,
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(CrfError::invalid("LBP needs max_iterations >= 1"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(CrfError::invalid(format!(
                "LBP damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(CrfError::invalid("LBP tolerance must be nonnegative"));
        }
        Ok(())
    }
}

/// Directed message slot: `2e` carries lo→hi, `2e + 1` carries hi→lo.
struct Incidence {
    /// per node: (incoming slot, outgoing slot)
    slots: Vec<Vec<(usize, usize)>>,
}

impl Incidence {
    fn new(graph: &CrfGraph) -> Self {
        let mut slots = vec![Vec::new(); graph.node_count()];
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            slots[i].push((2 * e + 1, 2 * e));
            slots[j].push((2 * e, 2 * e + 1));
        }
        Incidence { slots }
    }
}

fn beliefs(theta: &StatVector, incidence: &Incidence, messages: &[f64], out: &mut [f64]) {
    let l = theta.num_labels();
    out.copy_from_slice(theta.unary());
    for (node, slots) in incidence.slots.iter().enumerate() {
        let b = &mut out[node * l..(node + 1) * l];
        for &(incoming, _) in slots {
            let m = &messages[incoming * l..(incoming + 1) * l];
            b.iter_mut().zip(m).for_each(|(bv, mv)| *bv += mv);
        }
    }
}

fn decode(belief: &[f64], l: usize, x: &mut [usize]) {
    for (node, xv) in x.iter_mut().enumerate() {
        let b = &belief[node * l..(node + 1) * l];
        let mut best = 0;
        for label in 1..l {
            if b[label] > b[best] {
                best = label;
            }
        }
        *xv = best;
    }
}

/// Loopy max-product belief propagation in the log domain.
///
/// Messages start at zero, are normalized to a maximum of 0 and damped as
/// `m = damping·m_old + (1 − damping)·m_new`. Beliefs are decoded after every
/// sweep and the highest-energy decode seen is returned, so on loopy graphs
/// the result never gets worse by running longer.
pub fn map_lbp(graph: &CrfGraph, theta: &StatVector, cfg: &LbpConfig) -> Result<MapResult> {
    theta.check_graph(graph)?;
    cfg.validate()?;
    let n = graph.node_count();
    let l = theta.num_labels();
    let incidence = Incidence::new(graph);

    let mut belief = vec![0.0; n * l];
    let mut x = vec![0usize; n];

    if graph.edge_count() == 0 {
        decode(theta.unary(), l, &mut x);
        let energy_value = energy_unchecked(graph, theta, &x);
        return Ok(MapResult {
            labeling: Labeling::new(x),
            energy_value,
            converged: true,
            iterations_used: 0,
        });
    }

    let slots = 2 * graph.edge_count();
    let mut messages = vec![0.0; slots * l];
    let mut next = vec![0.0; slots * l];
    let mut h = vec![0.0; l];

    let mut best_x = x.clone();
    let mut best_energy = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        beliefs(theta, &incidence, &messages, &mut belief);

        let mut delta: f64 = 0.0;
        for (e, &(lo, hi)) in graph.edges().iter().enumerate() {
            for forward in [true, false] {
                // message src -> dst along edge e
                let (src, slot, back) = if forward {
                    (lo, 2 * e, 2 * e + 1)
                } else {
                    (hi, 2 * e + 1, 2 * e)
                };
                let bs = &belief[src * l..(src + 1) * l];
                let mb = &messages[back * l..(back + 1) * l];
                for (hv, (b, m)) in h.iter_mut().zip(bs.iter().zip(mb)) {
                    *hv = b - m;
                }
                let out = &mut next[slot * l..(slot + 1) * l];
                for (x_dst, o) in out.iter_mut().enumerate() {
                    let mut best = f64::NEG_INFINITY;
                    for (x_src, &hv) in h.iter().enumerate() {
                        let pair = if forward {
                            theta.pair_value(e, x_src, x_dst)
                        } else {
                            theta.pair_value(e, x_dst, x_src)
                        };
                        let v = hv + pair;
                        if v > best {
                            best = v;
                        }
                    }
                    *o = best;
                }
                let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let old = &messages[slot * l..(slot + 1) * l];
                for (o, &prev) in out.iter_mut().zip(old) {
                    let fresh = *o - top;
                    *o = cfg.damping * prev + (1.0 - cfg.damping) * fresh;
                    delta = delta.max((*o - prev).abs());
                }
            }
        }
        std::mem::swap(&mut messages, &mut next);

        beliefs(theta, &incidence, &messages, &mut belief);
        decode(&belief, l, &mut x);
        let e = energy_unchecked(graph, theta, &x);
        if e > best_energy {
            best_energy = e;
            best_x.copy_from_slice(&x);
        }

        if delta < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(MapResult {
        labeling: Labeling::new(best_x),
        energy_value: best_energy,
        converged,
        iterations_used: iterations,
    })
}
