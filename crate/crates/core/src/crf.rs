//! Graph, label and parameter representation in the over-complete indicator
//! form. Parameters, sufficient statistics and moments all share the
//! [`StatVector`] shape, so every energy is a plain inner product.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::ops::Deref;

use crate::error::{CrfError, Result};

/// Probabilities are clamped to this floor before taking logarithms.
pub const PROB_EPSILON: f64 = 1e-8;

/// The discrete label set shared by every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    count: usize,
    names: Option<Vec<String>>,
}

impl LabelSpace {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(CrfError::invalid(format!(
                "label space needs at least 2 labels, got {count}"
            )));
        }
        Ok(LabelSpace { count, names: None })
    }

    pub fn with_names(names: Vec<String>) -> Result<Self> {
        let mut space = LabelSpace::new(names.len())?;
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(CrfError::invalid("label names must be unique"));
        }
        space.names = Some(names);
        Ok(space)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }
}

/// Undirected pairwise graph. Edges are stored as `(min, max)` pairs in
/// sorted order; every edge-indexed block follows that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl CrfGraph {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(CrfError::invalid("graph needs at least one node"));
        }
        let mut canonical = Vec::new();
        for (i, j) in edges {
            if i == j {
                return Err(CrfError::invalid(format!("self-loop on node {i}")));
            }
            if i >= node_count || j >= node_count {
                return Err(CrfError::invalid(format!(
                    "edge ({i}, {j}) references a node outside [0, {node_count})"
                )));
            }
            canonical.push((i.min(j), i.max(j)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(CrfError::invalid(format!("duplicate edge {:?}", w[0])));
        }
        Ok(CrfGraph {
            node_count,
            edges: canonical,
        })
    }

    /// 4-connected `width × height` grid with row-major node numbering.
    pub fn grid(width: usize, height: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..height {
            for c in 0..width {
                let v = r * width + c;
                if c + 1 < width {
                    edges.push((v, v + 1));
                }
                if r + 1 < height {
                    edges.push((v, v + width));
                }
            }
        }
        CrfGraph::new(width * height, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of the edge joining `i` and `j`, in either orientation.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    /// True when the graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.node_count).collect();
        fn find(parent: &mut [usize], mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                return false;
            }
            parent[ri] = rj;
        }
        true
    }
}

/// Layout of the per-edge pairwise statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairwiseLayout {
    /// `(I[x_i = x_j], I[x_i != x_j])`.
    PottsAgreement,
    /// One-hot over `(x_i, x_j)`, row-major with the lower node index first.
    Full,
}

impl PairwiseLayout {
    pub fn block_len(self, num_labels: usize) -> usize {
        match self {
            PairwiseLayout::PottsAgreement => 2,
            PairwiseLayout::Full => num_labels * num_labels,
        }
    }

    /// Offset inside a pairwise block of the statistic that fires for
    /// `(x_lo, x_hi)`, where `lo < hi` are the edge endpoints.
    #[inline]
    pub fn entry(self, num_labels: usize, x_lo: usize, x_hi: usize) -> usize {
        match self {
            PairwiseLayout::PottsAgreement => usize::from(x_lo != x_hi),
            PairwiseLayout::Full => x_lo * num_labels + x_hi,
        }
    }
}

/// A labeling `x`, one label index per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(Vec<usize>);

impl Labeling {
    pub fn new(assignment: Vec<usize>) -> Self {
        Labeling(assignment)
    }

    pub fn zeros(node_count: usize) -> Self {
        Labeling(vec![0; node_count])
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn validate(&self, node_count: usize, num_labels: usize) -> Result<()> {
        if self.0.len() != node_count {
            return Err(CrfError::shape(format!(
                "labeling has {} entries, graph has {node_count} nodes",
                self.0.len()
            )));
        }
        if let Some((i, &l)) = self.0.iter().enumerate().find(|(_, &l)| l >= num_labels) {
            return Err(CrfError::invalid(format!(
                "node {i} has label {l}, label space has {num_labels}"
            )));
        }
        Ok(())
    }
}

impl Deref for Labeling {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Labeling {
    fn from(v: Vec<usize>) -> Self {
        Labeling(v)
    }
}

/// A vector in sufficient-statistics space: per-node unary blocks of length
/// `|L|` followed by per-edge pairwise blocks. Stored flat, blocks contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVector {
    layout: PairwiseLayout,
    num_labels: usize,
    unary: Vec<f64>,
    pairwise: Vec<f64>,
}

impl StatVector {
    pub fn zeros(graph: &CrfGraph, num_labels: usize, layout: PairwiseLayout) -> Self {
        StatVector {
            layout,
            num_labels,
            unary: vec![0.0; graph.node_count() * num_labels],
            pairwise: vec![0.0; graph.edge_count() * layout.block_len(num_labels)],
        }
    }

    pub fn from_blocks(
        layout: PairwiseLayout,
        num_labels: usize,
        unary: &[Vec<f64>],
        pairwise: &[Vec<f64>],
    ) -> Result<Self> {
        let block = layout.block_len(num_labels);
        if let Some(i) = unary.iter().position(|b| b.len() != num_labels) {
            return Err(CrfError::shape(format!(
                "unary block {i} has length {}, expected {num_labels}",
                unary[i].len()
            )));
        }
        if let Some(e) = pairwise.iter().position(|b| b.len() != block) {
            return Err(CrfError::shape(format!(
                "pairwise block {e} has length {}, expected {block}",
                pairwise[e].len()
            )));
        }
        Ok(StatVector {
            layout,
            num_labels,
            unary: unary.concat(),
            pairwise: pairwise.concat(),
        })
    }

    pub fn layout(&self) -> PairwiseLayout {
        self.layout
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn node_count(&self) -> usize {
        self.unary.len() / self.num_labels
    }

    pub fn edge_count(&self) -> usize {
        self.pairwise.len() / self.pairwise_block_len()
    }

    pub fn pairwise_block_len(&self) -> usize {
        self.layout.block_len(self.num_labels)
    }

    pub fn unary(&self) -> &[f64] {
        &self.unary
    }

    pub fn unary_mut(&mut self) -> &mut [f64] {
        &mut self.unary
    }

    pub fn pairwise(&self) -> &[f64] {
        &self.pairwise
    }

    pub fn pairwise_mut(&mut self) -> &mut [f64] {
        &mut self.pairwise
    }

    pub fn unary_block(&self, node: usize) -> &[f64] {
        let l = self.num_labels;
        &self.unary[node * l..(node + 1) * l]
    }

    pub fn unary_block_mut(&mut self, node: usize) -> &mut [f64] {
        let l = self.num_labels;
        &mut self.unary[node * l..(node + 1) * l]
    }

    pub fn pairwise_block(&self, edge: usize) -> &[f64] {
        let b = self.pairwise_block_len();
        &self.pairwise[edge * b..(edge + 1) * b]
    }

    pub fn pairwise_block_mut(&mut self, edge: usize) -> &mut [f64] {
        let b = self.pairwise_block_len();
        &mut self.pairwise[edge * b..(edge + 1) * b]
    }

    /// Pairwise parameter value for edge `edge` when its lower endpoint takes
    /// `x_lo` and its higher endpoint `x_hi`.
    #[inline]
    pub fn pair_value(&self, edge: usize, x_lo: usize, x_hi: usize) -> f64 {
        let b = self.pairwise_block_len();
        self.pairwise[edge * b + self.layout.entry(self.num_labels, x_lo, x_hi)]
    }

    pub fn same_shape(&self, other: &StatVector) -> bool {
        self.layout == other.layout
            && self.num_labels == other.num_labels
            && self.unary.len() == other.unary.len()
            && self.pairwise.len() == other.pairwise.len()
    }

    pub fn check_same_shape(&self, other: &StatVector) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(CrfError::shape(format!(
                "stat vectors differ: ({:?}, |L|={}, {} unary, {} pairwise) vs ({:?}, |L|={}, {} unary, {} pairwise)",
                self.layout,
                self.num_labels,
                self.unary.len(),
                self.pairwise.len(),
                other.layout,
                other.num_labels,
                other.unary.len(),
                other.pairwise.len()
            )))
        }
    }

    pub fn check_graph(&self, graph: &CrfGraph) -> Result<()> {
        if self.node_count() != graph.node_count() || self.edge_count() != graph.edge_count() {
            return Err(CrfError::shape(format!(
                "stat vector has {} nodes / {} edges, graph has {} / {}",
                self.node_count(),
                self.edge_count(),
                graph.node_count(),
                graph.edge_count()
            )));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.unary.iter_mut().chain(self.pairwise.iter_mut()).for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// All entries, unary blocks first.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.unary.iter().chain(self.pairwise.iter())
    }

    /// Re-express a Potts-agreement vector in the full layout: agreement
    /// weight on the diagonal, disagreement weight off it.
    pub fn to_full(&self) -> StatVector {
        match self.layout {
            PairwiseLayout::Full => self.clone(),
            PairwiseLayout::PottsAgreement => {
                let l = self.num_labels;
                let mut pairwise = Vec::with_capacity(self.edge_count() * l * l);
                for e in 0..self.edge_count() {
                    let (agree, disagree) = (self.pairwise[2 * e], self.pairwise[2 * e + 1]);
                    for a in 0..l {
                        for b in 0..l {
                            pairwise.push(if a == b { agree } else { disagree });
                        }
                    }
                }
                StatVector {
                    layout: PairwiseLayout::Full,
                    num_labels: l,
                    unary: self.unary.clone(),
                    pairwise,
                }
            }
        }
    }
}

/// Sum of elementwise products over all blocks.
pub fn inner_product(a: &StatVector, b: &StatVector) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

/// One-hot encoding `φ(x)` of a labeling.
pub fn sufficient_stats(
    graph: &CrfGraph,
    num_labels: usize,
    layout: PairwiseLayout,
    x: &Labeling,
) -> Result<StatVector> {
    x.validate(graph.node_count(), num_labels)?;
    let mut stats = StatVector::zeros(graph, num_labels, layout);
    for (i, &l) in x.iter().enumerate() {
        stats.unary[i * num_labels + l] = 1.0;
    }
    let block = layout.block_len(num_labels);
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        stats.pairwise[e * block + layout.entry(num_labels, x[i], x[j])] = 1.0;
    }
    Ok(stats)
}

/// `θᵀφ(x)`, evaluated without materializing `φ(x)`. Terms are accumulated in
/// the same order as [`inner_product`] visits the non-zero entries, so both
/// routes agree bit for bit.
pub fn energy(graph: &CrfGraph, theta: &StatVector, x: &Labeling) -> Result<f64> {
    theta.check_graph(graph)?;
    x.validate(graph.node_count(), theta.num_labels())?;
    Ok(energy_unchecked(graph, theta, x))
}

#[inline]
pub(crate) fn energy_unchecked(graph: &CrfGraph, theta: &StatVector, x: &[usize]) -> f64 {
    let l = theta.num_labels();
    let mut total = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        total += theta.unary[i * l + xi];
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        total += theta.pair_value(e, x[i], x[j]);
    }
    total
}

/// Number of nodes on which two labelings agree.
pub fn unary_similarity(x: &Labeling, y: &Labeling) -> Result<usize> {
    if x.len() != y.len() {
        return Err(CrfError::shape(format!(
            "labelings have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y.iter()).filter(|(a, b)| a == b).count())
}

/// Convert a probability vector into clamped log-probabilities.
pub fn log_probabilities(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| p.max(PROB_EPSILON).ln()).collect()
}

/// A pairwise CRF: graph, labels, parameters `θ` and optional evaluation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfInstance {
    pub graph: CrfGraph,
    pub labels: LabelSpace,
    pub theta: StatVector,
    /// `false` marks a node whose unary term is unknown.
    pub observed: Vec<bool>,
    pub ground_truth: Option<Labeling>,
    /// Per-node RGB in `[0, 1]`, kept so instances can be re-masked.
    pub colors: Option<Vec<[f64; 3]>>,
}

impl CrfInstance {
    pub fn new(graph: CrfGraph, labels: LabelSpace, theta: StatVector) -> Result<Self> {
        let observed = vec![true; graph.node_count()];
        let instance = CrfInstance {
            graph,
            labels,
            theta,
            observed,
            ground_truth: None,
            colors: None,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.check_graph(&self.graph)?;
        if self.theta.num_labels() != self.labels.count() {
            return Err(CrfError::shape(format!(
                "theta has {} labels, label space has {}",
                self.theta.num_labels(),
                self.labels.count()
            )));
        }
        if self.observed.len() != self.graph.node_count() {
            return Err(CrfError::shape("observed mask length differs from node count"));
        }
        if let Some(gt) = &self.ground_truth {
            gt.validate(self.graph.node_count(), self.labels.count())?;
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.graph.node_count() {
                return Err(CrfError::shape("color list length differs from node count"));
            }
        }
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        self.labels.count()
    }

    pub fn sufficient_stats(&self, x: &Labeling) -> Result<StatVector> {
        sufficient_stats(&self.graph, self.labels.count(), self.theta.layout(), x)
    }

    pub fn energy(&self, x: &Labeling) -> Result<f64> {
        energy(&self.graph, &self.theta, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> CrfGraph {
        CrfGraph::new(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn label_space_rejects_degenerate() {
        assert!(LabelSpace::new(1).is_err());
        assert!(LabelSpace::with_names(vec!["a".into(), "a".into()]).is_err());
        let named = LabelSpace::with_names(vec!["bg".into(), "fg".into()]).unwrap();
        assert_eq!(named.count(), 2);
    }

    #[test]
    fn graph_canonicalizes_and_rejects_bad_edges() {
        let g = CrfGraph::new(3, [(1, 2), (1, 0), (2, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.edge_index(2, 1), Some(2));
        assert!(CrfGraph::new(2, [(0, 0)]).is_err());
        assert!(CrfGraph::new(2, [(0, 2)]).is_err());
        assert!(CrfGraph::new(2, [(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn grid_edges_and_forest_check() {
        let g = CrfGraph::grid(3, 2).unwrap();
        assert_eq!(g.edge_count(), 7);
        assert!(!g.is_forest());
        assert!(CrfGraph::grid(4, 1).unwrap().is_forest());
    }

    #[test]
    fn stats_chain_agree_and_disagree() {
        let g = chain2();
        let s = sufficient_stats(&g, 2, PairwiseLayout::PottsAgreement, &vec![0, 0].into()).unwrap();
        assert_eq!(s.unary_block(0), &[1.0, 0.0]);
        assert_eq!(s.unary_block(1), &[1.0, 0.0]);
        assert_eq!(s.pairwise_block(0), &[1.0, 0.0]);

        let s = sufficient_stats(&g, 2, PairwiseLayout::PottsAgreement, &vec![0, 1].into()).unwrap();
        assert_eq!(s.unary_block(1), &[0.0, 1.0]);
        assert_eq!(s.pairwise_block(0), &[0.0, 1.0]);
    }

    #[test]
    fn stats_triangle() {
        let g = CrfGraph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = sufficient_stats(&g, 3, PairwiseLayout::PottsAgreement, &vec![2, 2, 1].into()).unwrap();
        let block = |i, j| s.pairwise_block(g.edge_index(i, j).unwrap()).to_vec();
        assert_eq!(block(0, 1), vec![1.0, 0.0]);
        assert_eq!(block(1, 2), vec![0.0, 1.0]);
        assert_eq!(block(0, 2), vec![0.0, 1.0]);
    }

    #[test]
    fn stats_full_layout_is_one_hot_at_pair() {
        let g = chain2();
        let s = sufficient_stats(&g, 3, PairwiseLayout::Full, &vec![2, 1].into()).unwrap();
        let mut expected = vec![0.0; 9];
        expected[2 * 3 + 1] = 1.0;
        assert_eq!(s.pairwise_block(0), expected.as_slice());
    }

    #[test]
    fn stats_reject_bad_labeling() {
        let g = chain2();
        assert!(sufficient_stats(&g, 2, PairwiseLayout::Full, &vec![0].into()).is_err());
        assert!(sufficient_stats(&g, 2, PairwiseLayout::Full, &vec![0, 2].into()).is_err());
    }

    #[test]
    fn energy_examples() {
        let g1 = CrfGraph::new(1, []).unwrap();
        let zero = StatVector::zeros(&g1, 2, PairwiseLayout::PottsAgreement);
        assert_eq!(energy(&g1, &zero, &vec![1].into()).unwrap(), 0.0);

        let theta = StatVector::from_blocks(PairwiseLayout::PottsAgreement, 2, &[vec![1.5, -0.5]], &[])
            .unwrap();
        assert_eq!(energy(&g1, &theta, &vec![0].into()).unwrap(), 1.5);

        let g = chain2();
        let theta = StatVector::from_blocks(
            PairwiseLayout::PottsAgreement,
            2,
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.0, -2.0]],
        )
        .unwrap();
        assert_eq!(energy(&g, &theta, &vec![0, 0].into()).unwrap(), 1.0);
        assert_eq!(energy(&g, &theta, &vec![0, 1].into()).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_shape_mismatch() {
        let g = chain2();
        let wrong = StatVector::zeros(&CrfGraph::new(3, []).unwrap(), 2, PairwiseLayout::Full);
        assert!(energy(&g, &wrong, &vec![0, 0].into()).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = CrfGraph::grid(2, 2).unwrap();
        let s = sufficient_stats(&g, 3, PairwiseLayout::PottsAgreement, &vec![0, 2, 1, 1].into()).unwrap();
        assert_eq!(inner_product(&s, &s).unwrap(), 4.0 + 4.0);
        let z = StatVector::zeros(&g, 3, PairwiseLayout::PottsAgreement);
        assert_eq!(inner_product(&z, &s).unwrap(), 0.0);

        let g1 = CrfGraph::new(1, []).unwrap();
        let a = StatVector::from_blocks(PairwiseLayout::Full, 2, &[vec![0.5, 0.5]], &[]).unwrap();
        let b = StatVector::from_blocks(PairwiseLayout::Full, 2, &[vec![1.0, 0.0]], &[]).unwrap();
        assert_eq!(inner_product(&a, &b).unwrap(), 0.5);

        let full = StatVector::zeros(&g1, 2, PairwiseLayout::Full);
        let potts = StatVector::zeros(&g, 2, PairwiseLayout::Full);
        assert!(inner_product(&full, &potts).is_err());
    }

    #[test]
    fn unary_similarity_examples() {
        let x: Labeling = vec![0, 1, 1, 0, 1].into();
        assert_eq!(unary_similarity(&x, &x).unwrap(), 5);
        let y: Labeling = x.iter().map(|&l| 1 - l).collect::<Vec<_>>().into();
        assert_eq!(unary_similarity(&x, &y).unwrap(), 0);
        assert_eq!(
            unary_similarity(&vec![0, 1, 1].into(), &vec![0, 0, 1].into()).unwrap(),
            2
        );
        assert!(unary_similarity(&vec![0].into(), &vec![0, 1].into()).is_err());
    }

    #[test]
    fn log_probabilities_clamp() {
        let lp = log_probabilities(&[1.0, 0.0]);
        assert_eq!(lp[0], 0.0);
        assert!((lp[1] - PROB_EPSILON.ln()).abs() < 1e-12);
    }
}
