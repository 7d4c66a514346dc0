//! Target moment vectors `μ` and their per-block update rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf::{sufficient_stats, CrfGraph, CrfInstance, Labeling, PairwiseLayout, StatVector};
use crate::error::{CrfError, Result};

/// Tolerance on block sums for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Target moments with per-block update rates.
///
/// A unary block takes part in the dynamics only when its node is flagged in
/// `unary_constrained` and `eta_unary > 0`; pairwise blocks take part only
/// when `eta_pairwise > 0`. Unconstrained blocks keep their initial
/// parameters and carry zero weight in the reconstruction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub mu: StatVector,
    pub eta_unary: f64,
    pub eta_pairwise: f64,
    pub unary_constrained: Vec<bool>,
    pub in_polytope: bool,
    /// Rescale `θ` onto a fixed-norm ball after every update.
    pub normalize_theta: bool,
}

impl MomentSpec {
    pub fn new(
        mu: StatVector,
        eta_unary: f64,
        eta_pairwise: f64,
        unary_constrained: Vec<bool>,
    ) -> Result<Self> {
        check_rates(eta_unary, eta_pairwise)?;
        if unary_constrained.len() != mu.node_count() {
            return Err(CrfError::shape(format!(
                "constraint mask has {} entries, moments have {} nodes",
                unary_constrained.len(),
                mu.node_count()
            )));
        }
        if !mu.is_finite() {
            return Err(CrfError::invalid("moments must be finite"));
        }
        let mut spec = MomentSpec {
            mu,
            eta_unary,
            eta_pairwise,
            unary_constrained,
            in_polytope: false,
            normalize_theta: false,
        };
        spec.in_polytope = spec.constrained_blocks_in_polytope();
        Ok(spec)
    }

    /// Same moments, new rates.
    pub fn with_rates(mut self, eta_unary: f64, eta_pairwise: f64) -> Result<Self> {
        check_rates(eta_unary, eta_pairwise)?;
        self.eta_unary = eta_unary;
        self.eta_pairwise = eta_pairwise;
        self.in_polytope = self.constrained_blocks_in_polytope();
        Ok(self)
    }

    pub fn with_normalization(mut self, on: bool) -> Self {
        self.normalize_theta = on;
        self
    }

    /// Effective rate of node `i`'s unary block.
    #[inline]
    pub fn unary_rate(&self, node: usize) -> f64 {
        if self.unary_constrained[node] {
            self.eta_unary
        } else {
            0.0
        }
    }

    #[inline]
    pub fn pairwise_rate(&self) -> f64 {
        self.eta_pairwise
    }

    fn constrained_blocks_in_polytope(&self) -> bool {
        let unary_ok = (0..self.mu.node_count())
            .filter(|&i| self.unary_rate(i) > 0.0)
            .all(|i| is_simplex_block(self.mu.unary_block(i)));
        let pairwise_ok = self.eta_pairwise == 0.0
            || (0..self.mu.edge_count()).all(|e| is_simplex_block(self.mu.pairwise_block(e)));
        unary_ok && pairwise_ok
    }
}

fn check_rates(eta_unary: f64, eta_pairwise: f64) -> Result<()> {
    if !(eta_unary >= 0.0 && eta_pairwise >= 0.0) || !eta_unary.is_finite() || !eta_pairwise.is_finite() {
        return Err(CrfError::invalid(format!(
            "update rates must be finite and nonnegative, got η_u={eta_unary}, η_p={eta_pairwise}"
        )));
    }
    if eta_unary == 0.0 && eta_pairwise == 0.0 {
        return Err(CrfError::invalid("at least one update rate must be positive"));
    }
    Ok(())
}

fn is_simplex_block(block: &[f64]) -> bool {
    block.iter().all(|&v| v >= 0.0) && (block.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// Necessary condition for marginal-polytope membership: every block is a
/// probability vector. Consistency between unary and pairwise blocks is not
/// checked.
pub fn validate_polytope(mu: &StatVector) -> bool {
    (0..mu.node_count()).all(|i| is_simplex_block(mu.unary_block(i)))
        && (0..mu.edge_count()).all(|e| is_simplex_block(mu.pairwise_block(e)))
}

/// `μ_u = 0` with `η_p = 0`: the moment target under which Herding
/// reproduces divMbest.
pub fn moments_zero(
    graph: &CrfGraph,
    num_labels: usize,
    layout: PairwiseLayout,
    eta_unary: f64,
) -> Result<MomentSpec> {
    MomentSpec::new(
        StatVector::zeros(graph, num_labels, layout),
        eta_unary,
        0.0,
        vec![true; graph.node_count()],
    )
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = values.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / total).collect()
}

fn unary_moments(instance: &CrfInstance) -> Result<(StatVector, Vec<bool>)> {
    let theta = &instance.theta;
    let mut mu = StatVector::zeros(&instance.graph, instance.num_labels(), theta.layout());
    for i in 0..instance.graph.node_count() {
        if !instance.observed[i] {
            continue;
        }
        let block = theta.unary_block(i);
        if !block.iter().all(|v| v.is_finite()) {
            return Err(CrfError::invalid(format!("node {i} has a non-finite unary parameter")));
        }
        mu.unary_block_mut(i).copy_from_slice(&softmax(block));
    }
    Ok((mu, instance.observed.clone()))
}

/// `μ_u = θ̃_u`: unary moments from the exponentiated, renormalized unary
/// parameters of observed nodes. Unobserved nodes stay unconstrained.
pub fn moments_from_unary(instance: &CrfInstance, eta_unary: f64) -> Result<MomentSpec> {
    let (mu, mask) = unary_moments(instance)?;
    MomentSpec::new(mu, eta_unary, 0.0, mask)
}

/// `μ = θ̃`: unary moments as in [`moments_from_unary`] plus pairwise
/// moments from the normalized exponentiated Potts block of every edge.
pub fn moments_full(instance: &CrfInstance, eta_unary: f64, eta_pairwise: f64) -> Result<MomentSpec> {
    if instance.theta.layout() != PairwiseLayout::PottsAgreement {
        return Err(CrfError::invalid("full moments need the Potts agreement layout"));
    }
    if !(eta_unary > 0.0 && eta_pairwise > 0.0) {
        return Err(CrfError::invalid("full moments need both update rates positive"));
    }
    let (mut mu, mask) = unary_moments(instance)?;
    for e in 0..instance.graph.edge_count() {
        let block = instance.theta.pairwise_block(e);
        if !block.iter().all(|v| v.is_finite()) {
            return Err(CrfError::invalid(format!("edge {e} has a non-finite pairwise parameter")));
        }
        if block[1] > 0.0 {
            return Err(CrfError::invalid(format!(
                "edge {e} has positive disagreement weight {}; expected (0, -C) with C >= 0",
                block[1]
            )));
        }
        mu.pairwise_block_mut(e).copy_from_slice(&softmax(block));
    }
    MomentSpec::new(mu, eta_unary, eta_pairwise, mask)
}

/// Average of the given sufficient-statistics vectors.
pub fn average_stats<'a>(stats: impl IntoIterator<Item = &'a StatVector>) -> Result<StatVector> {
    let mut iter = stats.into_iter();
    let first = iter.next().ok_or_else(|| CrfError::invalid("cannot average zero vectors"))?;
    let mut sum = first.clone();
    let mut count = 1usize;
    for s in iter {
        sum.check_same_shape(s)?;
        sum.unary_mut().iter_mut().zip(s.unary()).for_each(|(a, b)| *a += b);
        sum.pairwise_mut().iter_mut().zip(s.pairwise()).for_each(|(a, b)| *a += b);
        count += 1;
    }
    sum.scale(1.0 / count as f64);
    Ok(sum)
}

/// `count` labelings drawn uniformly at random from a seeded stream.
pub fn random_labelings(node_count: usize, num_labels: usize, count: usize, seed: u64) -> Vec<Labeling> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Labeling::new((0..node_count).map(|_| rng.random_range(0..num_labels)).collect()))
        .collect()
}

/// Moments equal to the mean statistics of the given labelings; a point of
/// the marginal polytope by construction. Every block is constrained.
pub fn moments_from_samples(
    graph: &CrfGraph,
    num_labels: usize,
    layout: PairwiseLayout,
    samples: &[Labeling],
    eta_unary: f64,
    eta_pairwise: f64,
) -> Result<MomentSpec> {
    let stats = samples
        .iter()
        .map(|x| sufficient_stats(graph, num_labels, layout, x))
        .collect::<Result<Vec<_>>>()?;
    let mu = average_stats(&stats)?;
    MomentSpec::new(mu, eta_unary, eta_pairwise, vec![true; graph.node_count()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::{sufficient_stats, LabelSpace, Labeling};

    fn instance_with(unary: Vec<Vec<f64>>, pairwise: Vec<Vec<f64>>, edges: Vec<(usize, usize)>) -> CrfInstance {
        let g = CrfGraph::new(unary.len(), edges).unwrap();
        let l = unary[0].len();
        let theta = StatVector::from_blocks(PairwiseLayout::PottsAgreement, l, &unary, &pairwise).unwrap();
        CrfInstance::new(g, LabelSpace::new(l).unwrap(), theta).unwrap()
    }

    #[test]
    fn zero_moments() {
        let g = CrfGraph::grid(3, 3).unwrap();
        let spec = moments_zero(&g, 3, PairwiseLayout::PottsAgreement, 0.5).unwrap();
        assert!(spec.mu.iter().all(|&v| v == 0.0));
        assert_eq!(spec.eta_pairwise, 0.0);
        assert!(!spec.in_polytope);
        assert!(!spec.normalize_theta);

        let g1 = CrfGraph::new(1, []).unwrap();
        let spec = moments_zero(&g1, 3, PairwiseLayout::PottsAgreement, 1.0).unwrap();
        assert_eq!(spec.mu.unary_block(0), &[0.0, 0.0, 0.0]);
        assert!(!validate_polytope(&spec.mu));
    }

    #[test]
    fn rates_must_not_both_vanish() {
        let g = CrfGraph::new(1, []).unwrap();
        assert!(moments_zero(&g, 2, PairwiseLayout::PottsAgreement, 0.0).is_err());
        assert!(moments_zero(&g, 2, PairwiseLayout::PottsAgreement, -1.0).is_err());
    }

    #[test]
    fn unary_moments_invert_log() {
        let inst = instance_with(
            vec![vec![0.7f64.ln(), 0.3f64.ln()], vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![],
            vec![],
        );
        let spec = moments_from_unary(&inst, 0.5).unwrap();
        let b0 = spec.mu.unary_block(0);
        assert!((b0[0] - 0.7).abs() < 1e-12 && (b0[1] - 0.3).abs() < 1e-12);
        assert_eq!(spec.mu.unary_block(1), &[0.5, 0.5]);
        let e = std::f64::consts::E;
        let b2 = spec.mu.unary_block(2);
        assert!((b2[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((b2[0] - 0.7310585786300049).abs() < 1e-12);
        assert!(spec.in_polytope);
        assert_eq!(spec.eta_pairwise, 0.0);
    }

    #[test]
    fn unary_moments_skip_unobserved_nodes() {
        let mut inst = instance_with(vec![vec![0.0, -3.0], vec![0.0, 0.0]], vec![], vec![]);
        inst.observed[1] = false;
        let spec = moments_from_unary(&inst, 1.0).unwrap();
        assert_eq!(spec.unary_rate(1), 0.0);
        assert_eq!(spec.mu.unary_block(1), &[0.0, 0.0]);
        assert!(spec.in_polytope);
    }

    #[test]
    fn unary_moments_reject_non_finite() {
        let inst = instance_with(vec![vec![f64::NEG_INFINITY, 0.0]], vec![], vec![]);
        assert!(moments_from_unary(&inst, 1.0).is_err());
    }

    #[test]
    fn full_moments_logistic() {
        let inst = instance_with(
            vec![vec![0.0, 0.0]; 4],
            vec![vec![0.0, 0.0], vec![0.0, -1.0], vec![0.0, -800.0]],
            vec![(0, 1), (1, 2), (2, 3)],
        );
        let spec = moments_full(&inst, 0.75, 0.25).unwrap();
        assert_eq!(spec.mu.pairwise_block(0), &[0.5, 0.5]);
        let b1 = spec.mu.pairwise_block(1);
        assert!((b1[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((b1[1] - 0.2689414213699951).abs() < 1e-12);
        assert_eq!(spec.mu.pairwise_block(2), &[1.0, 0.0]);
        assert!(spec.in_polytope);
        assert!(spec.eta_unary > 0.0 && spec.eta_pairwise > 0.0);
    }

    #[test]
    fn full_moments_reject_repulsive_edges() {
        let inst = instance_with(vec![vec![0.0, 0.0]; 2], vec![vec![0.0, 0.3]], vec![(0, 1)]);
        assert!(moments_full(&inst, 1.0, 1.0).is_err());
    }

    #[test]
    fn polytope_examples() {
        let g = CrfGraph::grid(3, 2).unwrap();
        let samples: Vec<StatVector> = [
            vec![0, 1, 2, 0, 1, 2],
            vec![1, 1, 1, 1, 1, 1],
            vec![2, 0, 2, 0, 2, 0],
            vec![0, 0, 1, 1, 2, 2],
            vec![2, 2, 2, 0, 0, 0],
        ]
        .into_iter()
        .map(|x| sufficient_stats(&g, 3, PairwiseLayout::PottsAgreement, &Labeling::new(x)).unwrap())
        .collect();
        assert!(validate_polytope(&average_stats(&samples).unwrap()));

        let g1 = CrfGraph::new(1, []).unwrap();
        assert!(!validate_polytope(&StatVector::zeros(&g1, 2, PairwiseLayout::Full)));
        let over = StatVector::from_blocks(PairwiseLayout::Full, 2, &[vec![0.6, 0.6]], &[]).unwrap();
        assert!(!validate_polytope(&over));
    }
}
