use herdcrf::moments::MomentSpec;
use herdcrf::{CrfGraph, PairwiseLayout, StatVector};

/// Every labeling of `n` nodes in lexicographic order (node 0 most
/// significant).
pub fn labelings(n: usize, labels: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = (labels as u64).pow(n as u32);
    (0..total).map(move |mut code| {
        let mut x = vec![0; n];
        for slot in x.iter_mut().rev() {
            *slot = (code % labels as u64) as usize;
            code /= labels as u64;
        }
        x
    })
}

fn pair_offset(layout: PairwiseLayout, labels: usize, a: usize, b: usize) -> usize {
    match layout {
        PairwiseLayout::PottsAgreement => {
            if a == b {
                0
            } else {
                1
            }
        }
        PairwiseLayout::Full => a * labels + b,
    }
}

/// `θᵀφ(x)` by direct lookup.
pub fn energy(graph: &CrfGraph, theta: &StatVector, x: &[usize]) -> f64 {
    let l = theta.num_labels();
    let mut e: f64 = (0..graph.node_count()).map(|i| theta.unary_block(i)[x[i]]).sum();
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        e += theta.pairwise_block(k)[pair_offset(theta.layout(), l, x[i], x[j])];
    }
    e
}

/// First labeling in lexicographic order attaining the maximum of `f`.
pub fn argmax<F: FnMut(&[usize]) -> f64>(n: usize, labels: usize, mut f: F) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for x in labelings(n, labels) {
        let v = f(&x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Energy range `(min, max)` over all labelings.
pub fn energy_range(graph: &CrfGraph, theta: &StatVector) -> (f64, f64) {
    labelings(graph.node_count(), theta.num_labels())
        .map(|x| energy(graph, theta, &x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)))
}

/// Per-block mean one-hot statistics `(unary, pairwise)` of `samples`.
pub fn mean_stats(
    graph: &CrfGraph,
    labels: usize,
    layout: PairwiseLayout,
    samples: &[Vec<usize>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = samples.len() as f64;
    let width = match layout {
        PairwiseLayout::PottsAgreement => 2,
        PairwiseLayout::Full => labels * labels,
    };
    let mut unary = vec![vec![0.0; labels]; graph.node_count()];
    let mut pairwise = vec![vec![0.0; width]; graph.edge_count()];
    for x in samples {
        for (i, &xi) in x.iter().enumerate() {
            unary[i][xi] += 1.0 / m;
        }
        for (k, &(i, j)) in graph.edges().iter().enumerate() {
            pairwise[k][pair_offset(layout, labels, x[i], x[j])] += 1.0 / m;
        }
    }
    (unary, pairwise)
}

/// Rate-weighted squared distance between `μ` and the sample mean, over the
/// blocks the spec constrains.
pub fn weighted_error(graph: &CrfGraph, spec: &MomentSpec, samples: &[Vec<usize>]) -> f64 {
    let mu = &spec.mu;
    let (unary, pairwise) = mean_stats(graph, mu.num_labels(), mu.layout(), samples);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let mut err = 0.0;
    for (i, u) in unary.iter().enumerate() {
        if spec.unary_constrained[i] {
            err += spec.eta_unary * sq(mu.unary_block(i), u);
        }
    }
    for (k, p) in pairwise.iter().enumerate() {
        err += spec.eta_pairwise * sq(mu.pairwise_block(k), p);
    }
    err
}

/// Confusion matrix `c[g][p]`.
pub fn confusion(pred: &[usize], gt: &[usize], labels: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0; labels]; labels];
    for (&p, &g) in pred.iter().zip(gt) {
        c[g][p] += 1;
    }
    c
}

/// Macro-averaged `(per-class accuracy, Jaccard)` over ground-truth classes.
pub fn confusion_scores(pred: &[usize], gt: &[usize], labels: usize) -> (f64, f64) {
    let c = confusion(pred, gt, labels);
    let (mut acc, mut jac, mut present) = (0.0, 0.0, 0.0);
    for k in 0..labels {
        let row: usize = c[k].iter().sum();
        if row == 0 {
            continue;
        }
        let col: usize = (0..labels).map(|g| c[g][k]).sum();
        acc += c[k][k] as f64 / row as f64;
        jac += c[k][k] as f64 / (row + col - c[k][k]) as f64;
        present += 1.0;
    }
    (acc / present, jac / present)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}
