use herdcrf::{CrfGraph, PairwiseLayout, StatVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tree: node `i > 0` hangs off a uniformly chosen earlier node.
pub fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> CrfGraph {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    CrfGraph::new(n, edges).expect("tree edges are valid")
}

/// Random tree plus one extra edge closing exactly one cycle (`n ≥ 3`).
pub fn random_single_loop(n: usize, rng: &mut ChaCha8Rng) -> CrfGraph {
    assert!(n >= 3);
    loop {
        let tree = random_tree(n, rng);
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| tree.edge_index(i, j).is_none())
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let extra = candidates[rng.random_range(0..candidates.len())];
        let mut edges = tree.edges().to_vec();
        edges.push(extra);
        return CrfGraph::new(n, edges).expect("one extra edge is valid");
    }
}

/// Parameters drawn uniformly from `[-scale, scale]`.
pub fn random_theta(graph: &CrfGraph, labels: usize, layout: PairwiseLayout, scale: f64, rng: &mut ChaCha8Rng) -> StatVector {
    let unary: Vec<Vec<f64>> = (0..graph.node_count())
        .map(|_| (0..labels).map(|_| rng.random_range(-scale..=scale)).collect())
        .collect();
    let pairwise: Vec<Vec<f64>> = (0..graph.edge_count())
        .map(|_| (0..layout.block_len(labels)).map(|_| rng.random_range(-scale..=scale)).collect())
        .collect();
    StatVector::from_blocks(layout, labels, &unary, &pairwise).expect("shapes match")
}

pub fn random_layout(rng: &mut ChaCha8Rng) -> PairwiseLayout {
    if rng.random_bool(0.5) {
        PairwiseLayout::PottsAgreement
    } else {
        PairwiseLayout::Full
    }
}

/// Small instance: `2 ≤ N ≤ max_nodes`, `2 ≤ |L| ≤ max_labels`, a tree or a
/// single-loop graph (half each when `N ≥ 3`), random layout.
pub fn small_instance(seed: u64, max_nodes: usize, max_labels: usize) -> (CrfGraph, StatVector) {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_nodes);
    let labels = r.random_range(2..=max_labels);
    let graph = if n >= 3 && r.random_bool(0.5) {
        random_single_loop(n, &mut r)
    } else {
        random_tree(n, &mut r)
    };
    let layout = random_layout(&mut r);
    let theta = random_theta(&graph, labels, layout, 1.0, &mut r);
    (graph, theta)
}

pub fn random_labeling(n: usize, labels: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..labels)).collect()
}
