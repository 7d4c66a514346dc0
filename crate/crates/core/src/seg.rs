//! Segmentation harness: sigmoid unaries, color-modulated Potts edges,
//! planted-blob grid scenes, interactive masking and oracle/mode scoring.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crf::{log_probabilities, CrfInstance, Labeling};
use crate::error::{CrfError, Result};
use crate::scene::{EdgeRecord, NodeRecord, Scene};

/// Largest grid the generator accepts.
pub const MAX_GRID_NODES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub a: f64,
    pub b: f64,
}

impl Default for SigmoidParams {
    fn default() -> Self {
        SigmoidParams { a: -7.0, b: 15.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PottsParams {
    /// Decay applied to the normalized color distance.
    pub decay: f64,
    /// Overall pairwise re-weighting.
    pub weight: f64,
}

impl PottsParams {
    pub fn new(decay: f64, weight: f64) -> Result<Self> {
        if !(decay > 0.0 && weight > 0.0 && decay.is_finite() && weight.is_finite()) {
            return Err(CrfError::invalid(format!(
                "Potts decay and weight must be positive, got {decay} and {weight}"
            )));
        }
        Ok(PottsParams { decay, weight })
    }

    pub fn semantic() -> Self {
        PottsParams { decay: 10.0, weight: 0.08 }
    }

    pub fn interactive() -> Self {
        PottsParams { decay: 1.0, weight: 0.15 }
    }
}

impl Default for PottsParams {
    fn default() -> Self {
        PottsParams::semantic()
    }
}

pub fn sigmoid_probability(s: f64, p: &SigmoidParams) -> f64 {
    1.0 / (1.0 + (-(p.a + p.b * s)).exp())
}

/// Sigmoid of each score, renormalized to sum to one.
pub fn scores_to_probabilities(scores: &[f64], p: &SigmoidParams) -> Vec<f64> {
    let raw: Vec<f64> = scores.iter().map(|&s| sigmoid_probability(s, p)).collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

fn check_color(c: &[f64; 3]) -> Result<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(CrfError::invalid(format!("color {c:?} outside [0, 1]^3")))
    }
}

/// `exp(−decay · ‖ci − cj‖₂ / √3)`.
pub fn color_similarity(ci: &[f64; 3], cj: &[f64; 3], decay: f64) -> Result<f64> {
    check_color(ci)?;
    check_color(cj)?;
    let d = ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / 3f64.sqrt();
    Ok((-decay * d).exp())
}

/// Potts parameter block `(0, −C)` with `C = weight · exp(−decay · d)`.
pub fn build_potts(ci: &[f64; 3], cj: &[f64; 3], p: &PottsParams) -> Result<[f64; 2]> {
    Ok([0.0, -p.weight * color_similarity(ci, cj, p.decay)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceKind {
    GridSemantic,
    GridInteractive,
}

impl InstanceKind {
    pub fn default_potts(self) -> PottsParams {
        match self {
            InstanceKind::GridSemantic => PottsParams::semantic(),
            InstanceKind::GridInteractive => PottsParams::interactive(),
        }
    }
}

/// Fixed, well-separated prototype colors; labels beyond the palette get
/// seeded random prototypes.
const PALETTE: [[f64; 3]; 8] = [
    [0.85, 0.15, 0.15],
    [0.15, 0.75, 0.2],
    [0.2, 0.3, 0.9],
    [0.9, 0.85, 0.2],
    [0.75, 0.25, 0.8],
    [0.2, 0.85, 0.85],
    [0.1, 0.1, 0.1],
    [0.95, 0.95, 0.95],
];

const COLOR_NOISE: f64 = 0.04;

/// Planted-blob grid scene. Regions are Voronoi cells of random seeds; the
/// first `labels` regions carry labels `0..labels` so every label appears.
/// Scores are the ground-truth indicator plus Gaussian noise of std `noise`.
pub fn generate_scene(
    kind: InstanceKind,
    width: usize,
    height: usize,
    labels: usize,
    noise: f64,
    seed: u64,
) -> Result<Scene> {
    let n = width * height;
    if width == 0 || height == 0 || n > MAX_GRID_NODES {
        return Err(CrfError::invalid(format!(
            "grid {width}x{height} must be non-empty with at most {MAX_GRID_NODES} nodes"
        )));
    }
    if labels < 2 {
        return Err(CrfError::invalid("at least 2 labels are required"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CrfError::invalid(format!("noise must be finite and nonnegative, got {noise}")));
    }
    let regions = labels.max(n / 16).min(n);
    if regions < labels {
        return Err(CrfError::invalid(format!("{n} nodes cannot hold {labels} labels")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = sample(&mut rng, n, regions)
        .into_iter()
        .map(|v| ((v % width) as f64, (v / width) as f64))
        .collect();
    let region_label: Vec<usize> = (0..regions)
        .map(|r| if r < labels { r } else { rng.random_range(0..labels) })
        .collect();
    let prototypes: Vec<[f64; 3]> = (0..labels)
        .map(|l| {
            PALETTE.get(l).copied().unwrap_or_else(|| {
                [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)]
            })
        })
        .collect();

    let color_noise = Normal::new(0.0, COLOR_NOISE).expect("valid std");
    let score_noise = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut nodes = Vec::with_capacity(n);
    for v in 0..n {
        let (c, r) = ((v % width) as f64, (v / width) as f64);
        let region = (0..regions)
            .min_by(|&a, &b| {
                let da = (centers[a].0 - c).powi(2) + (centers[a].1 - r).powi(2);
                let db = (centers[b].0 - c).powi(2) + (centers[b].1 - r).powi(2);
                da.total_cmp(&db)
            })
            .expect("at least one region");
        let gt = region_label[region];
        let mut color = prototypes[gt];
        for ch in color.iter_mut() {
            *ch = (*ch + color_noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        let scores: Vec<f64> = (0..labels)
            .map(|l| {
                let base = if l == gt { 1.0 } else { 0.0 };
                if noise > 0.0 {
                    base + score_noise.sample(&mut rng)
                } else {
                    base
                }
            })
            .collect();
        let interactive = kind == InstanceKind::GridInteractive;
        nodes.push(NodeRecord {
            id: v,
            unary_scores: if interactive { None } else { Some(scores) },
            observed: !interactive,
            gt: Some(gt),
            color: Some(color),
        });
    }

    let mut edges = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let v = r * width + c;
            if c + 1 < width {
                edges.push(EdgeRecord { i: v, j: v + 1, similarity: None });
            }
            if r + 1 < height {
                edges.push(EdgeRecord { i: v, j: v + width, similarity: None });
            }
        }
    }
    Ok(Scene { labels, nodes, edges })
}

/// [`generate_scene`] assembled into a CRF.
#[allow(clippy::too_many_arguments)]
pub fn generate_instance(
    kind: InstanceKind,
    width: usize,
    height: usize,
    labels: usize,
    noise: f64,
    seed: u64,
    sigmoid: &SigmoidParams,
    potts: &PottsParams,
) -> Result<CrfInstance> {
    generate_scene(kind, width, height, labels, noise, seed)?.to_instance(sigmoid, potts)
}

/// Keep the unary terms of a seeded random `⌈fraction · N⌉` subset of nodes,
/// set to the clamped log of the ground-truth indicator. Every other node
/// becomes unobserved with all-zero unary parameters.
pub fn mask_unaries(instance: &CrfInstance, observed_fraction: f64, seed: u64) -> Result<CrfInstance> {
    if !(observed_fraction > 0.0 && observed_fraction <= 1.0) {
        return Err(CrfError::invalid(format!(
            "observed fraction must lie in (0, 1], got {observed_fraction}"
        )));
    }
    let gt = instance
        .ground_truth
        .as_ref()
        .ok_or_else(|| CrfError::invalid("masking needs ground truth"))?;
    let n = instance.graph.node_count();
    let l = instance.num_labels();
    let keep = ((observed_fraction * n as f64).ceil() as usize).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = vec![false; n];
    for v in sample(&mut rng, n, keep) {
        observed[v] = true;
    }

    let mut masked = instance.clone();
    for (v, &obs) in observed.iter().enumerate() {
        let block = masked.theta.unary_block_mut(v);
        if obs {
            let total = 1.0 + (l - 1) as f64 * crate::crf::PROB_EPSILON;
            let probs: Vec<f64> = (0..l)
                .map(|k| if k == gt[v] { 1.0 / total } else { crate::crf::PROB_EPSILON / total })
                .collect();
            block.copy_from_slice(&log_probabilities(&probs));
        } else {
            block.iter_mut().for_each(|t| *t = 0.0);
        }
    }
    masked.observed = observed;
    Ok(masked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    #[default]
    PerClassAccuracy,
    Jaccard,
}

/// Macro-averaged score over the classes present in `gt`, plus the
/// per-class scores (`None` for classes absent from `gt`).
pub fn score(pred: &Labeling, gt: &Labeling, num_labels: usize, metric: MetricKind) -> Result<(f64, Vec<Option<f64>>)> {
    gt.validate(gt.len(), num_labels)?;
    pred.validate(gt.len(), num_labels)?;
    let mut hit = vec![0usize; num_labels];
    let mut in_gt = vec![0usize; num_labels];
    let mut in_pred = vec![0usize; num_labels];
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        in_gt[g] += 1;
        in_pred[p] += 1;
        if p == g {
            hit[g] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_labels)
        .map(|c| {
            (in_gt[c] > 0).then(|| match metric {
                MetricKind::PerClassAccuracy => hit[c] as f64 / in_gt[c] as f64,
                MetricKind::Jaccard => hit[c] as f64 / (in_gt[c] + in_pred[c] - hit[c]) as f64,
            })
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok((mean, per_class))
}

/// Hypothesis scoring highest against `gt`; ties go to the lowest index.
pub fn oracle_select(hypotheses: &[Labeling], gt: &Labeling, num_labels: usize, metric: MetricKind) -> Result<(usize, f64)> {
    if hypotheses.is_empty() {
        return Err(CrfError::invalid("oracle selection needs at least one hypothesis"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, h) in hypotheses.iter().enumerate() {
        let (s, _) = score(h, gt, num_labels, metric)?;
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best)
}

fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Per-node majority vote; ties go to the lowest label.
pub fn mode_labeling(hypotheses: &[Labeling], num_labels: usize) -> Result<Labeling> {
    let first = hypotheses
        .first()
        .ok_or_else(|| CrfError::invalid("mode needs at least one hypothesis"))?;
    let n = first.len();
    let mut counts = vec![0usize; n * num_labels];
    for h in hypotheses {
        h.validate(n, num_labels)?;
        for (i, &l) in h.iter().enumerate() {
            counts[i * num_labels + l] += 1;
        }
    }
    Ok(Labeling::new(
        (0..n)
            .map(|i| argmax_lowest(&counts[i * num_labels..(i + 1) * num_labels]))
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Entry `k` is the oracle score over the first `k + 1` hypotheses.
    pub oracle_accuracy: Vec<f64>,
    pub mode_accuracy: Vec<f64>,
    /// Per-class scores of the oracle hypothesis over the full set.
    pub per_class: Vec<Option<f64>>,
    /// Score of the first hypothesis (the MAP of the initial parameters).
    pub map_accuracy: f64,
    pub oracle_index: usize,
    pub metric_kind: MetricKind,
}

/// Oracle and mode curves over every prefix of `hypotheses`.
pub fn evaluate(hypotheses: &[Labeling], instance: &CrfInstance, metric: MetricKind) -> Result<EvalReport> {
    if hypotheses.is_empty() {
        return Err(CrfError::invalid("evaluation needs at least one hypothesis"));
    }
    let gt = instance
        .ground_truth
        .as_ref()
        .ok_or_else(|| CrfError::invalid("evaluation needs ground truth"))?;
    let l = instance.num_labels();
    let n = gt.len();

    let mut oracle_accuracy = Vec::with_capacity(hypotheses.len());
    let mut mode_accuracy = Vec::with_capacity(hypotheses.len());
    let mut counts = vec![0usize; n * l];
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, h) in hypotheses.iter().enumerate() {
        let (s, _) = score(h, gt, l, metric)?;
        if s > best.1 {
            best = (k, s);
        }
        oracle_accuracy.push(best.1);

        for (i, &label) in h.iter().enumerate() {
            counts[i * l + label] += 1;
        }
        let mode = Labeling::new((0..n).map(|i| argmax_lowest(&counts[i * l..(i + 1) * l])).collect());
        mode_accuracy.push(score(&mode, gt, l, metric)?.0);
    }
    let (_, per_class) = score(&hypotheses[best.0], gt, l, metric)?;
    Ok(EvalReport {
        map_accuracy: oracle_accuracy[0],
        oracle_accuracy,
        mode_accuracy,
        per_class,
        oracle_index: best.0,
        metric_kind: metric,
    })
}
