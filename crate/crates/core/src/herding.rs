//! The Herding dynamical system and divMbest.
//!
//! Each iteration maximizes the current parameters and then moves them
//! against the chosen sample's statistics:
//!
//! ```text
//! x_m     = arg max_x θ_mᵀ φ(x)
//! θ_{m+1} = θ_m + η (μ − φ(x_m))          (per block rate)
//! ```
//!
//! divMbest subtracts `λ φ_u(x_m)` from the unary parameters only, which is
//! the same system with `μ_u = 0`, `η_u = λ`, `η_p = 0` and `Θ = θ`.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::crf::{energy, sufficient_stats, CrfGraph, Labeling, PairwiseLayout, StatVector};
use crate::error::{CrfError, Result};
use crate::inference::{Inference, CONDITION_SLACK};
use crate::moments::{moments_zero, MomentSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerdingConfig {
    /// `Θ`, the starting parameters.
    pub initial_theta: StatVector,
    pub spec: MomentSpec,
    pub num_samples: usize,
    pub inference: Inference,
    /// Radius of the ball `θ` is projected onto after each update. When
    /// unset and `spec.normalize_theta` is on, `max(1, ‖Θ‖₂)` is used.
    pub theta_norm_cap: Option<f64>,
}

impl HerdingConfig {
    pub fn new(initial_theta: StatVector, spec: MomentSpec, num_samples: usize, inference: Inference) -> Self {
        HerdingConfig {
            initial_theta,
            spec,
            num_samples,
            inference,
            theta_norm_cap: None,
        }
    }

    pub fn validate(&self, graph: &CrfGraph) -> Result<()> {
        self.initial_theta.check_graph(graph)?;
        self.initial_theta.check_same_shape(&self.spec.mu)?;
        if self.num_samples == 0 {
            return Err(CrfError::invalid("num_samples must be at least 1"));
        }
        if !self.initial_theta.is_finite() {
            return Err(CrfError::invalid("initial parameters must be finite"));
        }
        if let Some(cap) = self.theta_norm_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(CrfError::invalid(format!("norm cap must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    pub fn effective_norm_cap(&self) -> Option<f64> {
        self.theta_norm_cap
            .or_else(|| self.spec.normalize_theta.then(|| self.initial_theta.norm().max(1.0)))
    }
}

/// One extracted hypothesis with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// 1-based sample index.
    pub m: usize,
    pub labeling: Labeling,
    /// Energy of the sample under the initial parameters `Θ`.
    pub energy: f64,
    /// Weighted reconstruction error after this sample.
    pub error: f64,
    /// Whether `θ_mᵀμ ≤ θ_mᵀφ(x_m)` held over the constrained blocks.
    pub condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub samples: Vec<Labeling>,
    /// `(1/m) Σ φ(x_k)`.
    pub running_mean_stats: StatVector,
    pub error_trace: Vec<f64>,
    pub condition_trace: Vec<bool>,
    pub energies: Vec<f64>,
}

impl HypothesisSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = SampleRecord> + '_ {
        (0..self.samples.len()).map(move |k| SampleRecord {
            m: k + 1,
            labeling: self.samples[k].clone(),
            energy: self.energies[k],
            error: self.error_trace[k],
            condition: self.condition_trace[k],
        })
    }

    /// One JSON object per sample, newline-terminated.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Per-block weights and target used for the error and condition traces.
#[derive(Debug, Clone)]
struct Tracker {
    mu: StatVector,
    unary_weight: Vec<f64>,
    pairwise_weight: f64,
    stat_sum: StatVector,
    count: usize,
}

impl Tracker {
    fn from_spec(spec: &MomentSpec) -> Self {
        let n = spec.mu.node_count();
        let mut stat_sum = spec.mu.clone();
        stat_sum.scale(0.0);
        Tracker {
            mu: spec.mu.clone(),
            unary_weight: (0..n).map(|i| spec.unary_rate(i)).collect(),
            pairwise_weight: spec.pairwise_rate(),
            stat_sum,
            count: 0,
        }
    }

    fn push(&mut self, stats: &StatVector) {
        self.stat_sum
            .unary_mut()
            .iter_mut()
            .zip(stats.unary())
            .for_each(|(a, b)| *a += b);
        self.stat_sum
            .pairwise_mut()
            .iter_mut()
            .zip(stats.pairwise())
            .for_each(|(a, b)| *a += b);
        self.count += 1;
    }

    fn error(&self) -> f64 {
        weighted_error(&self.mu, &self.stat_sum, self.count as f64, &self.unary_weight, self.pairwise_weight)
    }

    /// Masked approximate-MAP condition over blocks with positive weight.
    fn condition(&self, theta: &StatVector, stats: &StatVector) -> bool {
        let l = theta.num_labels();
        let b = theta.pairwise_block_len();
        let mut target = 0.0;
        let mut achieved = 0.0;
        for (i, &w) in self.unary_weight.iter().enumerate() {
            if w > 0.0 {
                for k in i * l..(i + 1) * l {
                    target += theta.unary()[k] * self.mu.unary()[k];
                    achieved += theta.unary()[k] * stats.unary()[k];
                }
            }
        }
        if self.pairwise_weight > 0.0 {
            for k in 0..theta.edge_count() * b {
                target += theta.pairwise()[k] * self.mu.pairwise()[k];
                achieved += theta.pairwise()[k] * stats.pairwise()[k];
            }
        }
        target <= achieved + CONDITION_SLACK
    }

    fn mean(&self) -> StatVector {
        let mut mean = self.stat_sum.clone();
        if self.count > 0 {
            mean.scale(1.0 / self.count as f64);
        }
        mean
    }
}

/// `Σ_b w_b ‖μ_b − sum_b / count‖²`.
fn weighted_error(mu: &StatVector, sum: &StatVector, count: f64, unary_weight: &[f64], pairwise_weight: f64) -> f64 {
    let l = mu.num_labels();
    let mut total = 0.0;
    for (i, &w) in unary_weight.iter().enumerate() {
        if w > 0.0 {
            let d: f64 = (i * l..(i + 1) * l)
                .map(|k| {
                    let r = mu.unary()[k] - sum.unary()[k] / count;
                    r * r
                })
                .sum();
            total += w * d;
        }
    }
    if pairwise_weight > 0.0 {
        let d: f64 = mu
            .pairwise()
            .iter()
            .zip(sum.pairwise())
            .map(|(m, s)| {
                let r = m - s / count;
                r * r
            })
            .sum();
        total += pairwise_weight * d;
    }
    total
}

/// `θ ← θ + η_b (μ_b − φ_b)` on every block with positive rate.
fn apply_herding_update(theta: &mut StatVector, spec: &MomentSpec, stats: &StatVector) {
    let l = theta.num_labels();
    for i in 0..theta.node_count() {
        let rate = spec.unary_rate(i);
        if rate > 0.0 {
            for k in i * l..(i + 1) * l {
                theta.unary_mut()[k] += rate * (spec.mu.unary()[k] - stats.unary()[k]);
            }
        }
    }
    let rate = spec.pairwise_rate();
    if rate > 0.0 {
        for (k, t) in theta.pairwise_mut().iter_mut().enumerate() {
            *t += rate * (spec.mu.pairwise()[k] - stats.pairwise()[k]);
        }
    }
}

fn project_onto_ball(theta: &mut StatVector, cap: Option<f64>) {
    if let Some(cap) = cap {
        let norm = theta.norm();
        if norm > cap {
            theta.scale(cap / norm);
        }
    }
}

/// One Herding iteration: MAP of `theta`, then the moment update.
pub fn herding_step(
    graph: &CrfGraph,
    theta: &StatVector,
    spec: &MomentSpec,
    inference: &Inference,
    norm_cap: Option<f64>,
) -> Result<(Labeling, StatVector)> {
    theta.check_same_shape(&spec.mu)?;
    let map = inference.run(graph, theta)?;
    let stats = sufficient_stats(graph, theta.num_labels(), theta.layout(), &map.labeling)?;
    let mut next = theta.clone();
    apply_herding_update(&mut next, spec, &stats);
    project_onto_ball(&mut next, norm_cap);
    Ok((map.labeling, next))
}

#[derive(Debug, Clone)]
enum UpdateRule {
    Herding { spec: MomentSpec, norm_cap: Option<f64> },
    DivMBest { lambda: f64 },
}

/// Step-by-step driver shared by Herding and divMbest. Exposes the current
/// parameters between steps.
#[derive(Debug, Clone)]
pub struct Sampler<'g> {
    graph: &'g CrfGraph,
    initial_theta: StatVector,
    theta: StatVector,
    rule: UpdateRule,
    inference: Inference,
    tracker: Tracker,
    records: Vec<SampleRecord>,
}

impl<'g> Sampler<'g> {
    pub fn herding(graph: &'g CrfGraph, cfg: &HerdingConfig) -> Result<Self> {
        cfg.validate(graph)?;
        Ok(Sampler {
            graph,
            initial_theta: cfg.initial_theta.clone(),
            theta: cfg.initial_theta.clone(),
            rule: UpdateRule::Herding {
                spec: cfg.spec.clone(),
                norm_cap: cfg.effective_norm_cap(),
            },
            inference: cfg.inference,
            tracker: Tracker::from_spec(&cfg.spec),
            records: Vec::new(),
        })
    }

    pub fn divmbest(graph: &'g CrfGraph, theta: &StatVector, lambda: f64, inference: Inference) -> Result<Self> {
        theta.check_graph(graph)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(CrfError::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        if !theta.is_finite() {
            return Err(CrfError::invalid("parameters must be finite"));
        }
        // traces are measured against the equivalent Herding target μ_u = 0
        let mut tracker = Tracker::from_spec(&moments_zero(graph, theta.num_labels(), theta.layout(), 1.0)?);
        tracker.unary_weight.iter_mut().for_each(|w| *w = lambda);
        Ok(Sampler {
            graph,
            initial_theta: theta.clone(),
            theta: theta.clone(),
            rule: UpdateRule::DivMBest { lambda },
            inference,
            tracker,
            records: Vec::new(),
        })
    }

    /// Parameters that the next call to [`Sampler::step`] will maximize.
    pub fn theta(&self) -> &StatVector {
        &self.theta
    }

    pub fn step(&mut self) -> Result<&SampleRecord> {
        let map = self.inference.run(self.graph, &self.theta)?;
        let stats = sufficient_stats(self.graph, self.theta.num_labels(), self.theta.layout(), &map.labeling)?;
        let condition = self.tracker.condition(&self.theta, &stats);
        self.tracker.push(&stats);
        let error = self.tracker.error();

        match &self.rule {
            UpdateRule::Herding { spec, norm_cap } => {
                apply_herding_update(&mut self.theta, spec, &stats);
                project_onto_ball(&mut self.theta, *norm_cap);
            }
            UpdateRule::DivMBest { lambda } => {
                for (t, s) in self.theta.unary_mut().iter_mut().zip(stats.unary()) {
                    *t -= lambda * s;
                }
            }
        }

        let energy = energy(self.graph, &self.initial_theta, &map.labeling)?;
        self.records.push(SampleRecord {
            m: self.records.len() + 1,
            labeling: map.labeling,
            energy,
            error,
            condition,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> HypothesisSet {
        let running_mean_stats = self.tracker.mean();
        let mut set = HypothesisSet {
            samples: Vec::with_capacity(self.records.len()),
            running_mean_stats,
            error_trace: Vec::with_capacity(self.records.len()),
            condition_trace: Vec::with_capacity(self.records.len()),
            energies: Vec::with_capacity(self.records.len()),
        };
        for r in self.records {
            set.samples.push(r.labeling);
            set.error_trace.push(r.error);
            set.condition_trace.push(r.condition);
            set.energies.push(r.energy);
        }
        set
    }
}

/// Run Herding for `cfg.num_samples` iterations starting from `Θ`.
pub fn herding_run(graph: &CrfGraph, cfg: &HerdingConfig) -> Result<HypothesisSet> {
    let mut sampler = Sampler::herding(graph, cfg)?;
    for _ in 0..cfg.num_samples {
        sampler.step()?;
    }
    Ok(sampler.finish())
}

/// divMbest: maximize, then subtract `λ φ_u(x)` from the unary parameters.
/// Pairwise parameters never change.
pub fn divmbest_run(
    graph: &CrfGraph,
    theta: &StatVector,
    lambda: f64,
    num_samples: usize,
    inference: Inference,
) -> Result<HypothesisSet> {
    if num_samples == 0 {
        return Err(CrfError::invalid("num_samples must be at least 1"));
    }
    let mut sampler = Sampler::divmbest(graph, theta, lambda, inference)?;
    for _ in 0..num_samples {
        sampler.step()?;
    }
    Ok(sampler.finish())
}

/// Rate-weighted squared distance between `μ` and the mean statistics of
/// `samples`, over constrained blocks only.
pub fn reconstruction_error(graph: &CrfGraph, spec: &MomentSpec, samples: &[Labeling]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CrfError::invalid("reconstruction error needs at least one sample"));
    }
    let mut tracker = Tracker::from_spec(spec);
    for x in samples {
        tracker.push(&sufficient_stats(graph, spec.mu.num_labels(), spec.mu.layout(), x)?);
    }
    Ok(tracker.error())
}

/// The three weighted terms of the diverse-sampling objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub initialization: f64,
    pub diversity: f64,
    pub moments: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.initialization + self.diversity + self.moments
    }
}

/// Terms of the objective whose maximizer is the next Herding sample after
/// `samples`:
///
/// ```text
/// (1/(η m)) φ(x)ᵀΘ − (1/m) Σ_k φ(x)ᵀφ(x_k) + φ(x)ᵀμ
/// ```
///
/// With per-block rates, each block's diversity and moment terms are scaled
/// by `η_b / η_ref` where `η_ref` is the unary rate (or the pairwise rate when
/// the unary rate is zero). Blocks with zero rate contribute only through `Θ`.
pub fn diverse_objective_terms(
    graph: &CrfGraph,
    x: &Labeling,
    samples: &[Labeling],
    cfg: &HerdingConfig,
) -> Result<ObjectiveTerms> {
    let m = samples.len();
    if m == 0 {
        return Err(CrfError::invalid("objective is undefined before the first sample (m = 0)"));
    }
    let spec = &cfg.spec;
    let eta_ref = if spec.eta_unary > 0.0 { spec.eta_unary } else { spec.eta_pairwise };
    let mf = m as f64;
    let l = spec.mu.num_labels();
    let layout = spec.mu.layout();
    let phi = sufficient_stats(graph, l, layout, x)?;

    let initialization = crate::crf::inner_product(&phi, &cfg.initial_theta)? / (eta_ref * mf);

    let mut overlap_unary = vec![0.0; graph.node_count()];
    let mut overlap_pairwise = 0.0;
    for s in samples {
        s.validate(graph.node_count(), l)?;
        for (i, o) in overlap_unary.iter_mut().enumerate() {
            if x[i] == s[i] {
                *o += 1.0;
            }
        }
        for &(i, j) in graph.edges() {
            if layout.entry(l, x[i], x[j]) == layout.entry(l, s[i], s[j]) {
                overlap_pairwise += 1.0;
            }
        }
    }

    let mut diversity = 0.0;
    let mut moments = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let w = spec.unary_rate(i) / eta_ref;
        if w > 0.0 {
            diversity -= w * overlap_unary[i] / mf;
            moments += w * spec.mu.unary_block(i)[xi];
        }
    }
    let w = spec.pairwise_rate() / eta_ref;
    if w > 0.0 {
        diversity -= w * overlap_pairwise / mf;
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            moments += w * spec.mu.pairwise_block(e)[layout.entry(l, x[i], x[j])];
        }
    }
    Ok(ObjectiveTerms {
        initialization,
        diversity,
        moments,
    })
}

pub fn diverse_objective(graph: &CrfGraph, x: &Labeling, samples: &[Labeling], cfg: &HerdingConfig) -> Result<f64> {
    Ok(diverse_objective_terms(graph, x, samples, cfg)?.total())
}

/// Per-node empirical label frequencies over `samples`.
pub fn mean_unary_marginals(samples: &[Labeling], num_labels: usize) -> Result<Vec<Vec<f64>>> {
    let first = samples
        .first()
        .ok_or_else(|| CrfError::invalid("marginals need at least one sample"))?;
    let n = first.len();
    let mut counts = vec![vec![0.0; num_labels]; n];
    for s in samples {
        s.validate(n, num_labels)?;
        for (i, &l) in s.iter().enumerate() {
            counts[i][l] += 1.0;
        }
    }
    let m = samples.len() as f64;
    counts.iter_mut().flatten().for_each(|c| *c /= m);
    Ok(counts)
}

/// Convenience: Herding configuration reproducing divMbest.
pub fn divmbest_as_herding(
    graph: &CrfGraph,
    theta: &StatVector,
    lambda: f64,
    num_samples: usize,
    inference: Inference,
) -> Result<HerdingConfig> {
    let layout: PairwiseLayout = theta.layout();
    let spec = moments_zero(graph, theta.num_labels(), layout, lambda)?;
    Ok(HerdingConfig::new(theta.clone(), spec, num_samples, inference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::PairwiseLayout;
    use crate::moments::MomentSpec;

    fn one_node(theta: [f64; 2]) -> (CrfGraph, StatVector) {
        let g = CrfGraph::new(1, []).unwrap();
        let t = StatVector::from_blocks(PairwiseLayout::PottsAgreement, 2, &[theta.to_vec()], &[]).unwrap();
        (g, t)
    }

    fn unary_spec(g: &CrfGraph, mu: [f64; 2], eta: f64) -> MomentSpec {
        let m = StatVector::from_blocks(PairwiseLayout::PottsAgreement, 2, &[mu.to_vec()], &[]).unwrap();
        MomentSpec::new(m, eta, 0.0, vec![true; g.node_count()]).unwrap()
    }

    #[test]
    fn step_from_unit_theta_toward_zero_moments() {
        let (g, t) = one_node([1.0, 0.0]);
        let spec = unary_spec(&g, [0.0, 0.0], 1.0);
        let (x, next) = herding_step(&g, &t, &spec, &Inference::BruteForce, None).unwrap();
        assert_eq!(x.to_vec(), vec![0]);
        assert_eq!(next.unary(), &[0.0, 0.0]);
    }

    #[test]
    fn step_is_fixed_point_when_moments_match_sample() {
        let (g, t) = one_node([1.0, 0.0]);
        let spec = unary_spec(&g, [1.0, 0.0], 0.7);
        let (_, next) = herding_step(&g, &t, &spec, &Inference::BruteForce, None).unwrap();
        assert_eq!(next, t);
    }

    #[test]
    fn two_label_cycle_reaches_equiprobable() {
        // θ: (1,0) → (0,0) → tie picks 0 → (−1,0) → 1 → (−1,−1) → 0 ...
        let (g, t) = one_node([1.0, 0.0]);
        let cfg = HerdingConfig::new(t.clone(), unary_spec(&g, [0.0, 0.0], 1.0), 6, Inference::BruteForce);
        let set = herding_run(&g, &cfg).unwrap();
        let labels: Vec<usize> = set.samples.iter().map(|s| s[0]).collect();
        assert_eq!(labels, vec![0, 0, 1, 0, 1, 0]);

        let div = divmbest_run(&g, &t, 1.0, 6, Inference::BruteForce).unwrap();
        assert_eq!(div.samples, set.samples);

        let cfg = HerdingConfig { num_samples: 200, ..cfg };
        let set = herding_run(&g, &cfg).unwrap();
        let marg = mean_unary_marginals(&set.samples, 2).unwrap();
        assert!((marg[0][0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_sample_is_initial_map() {
        let g = CrfGraph::new(2, [(0, 1)]).unwrap();
        let t = StatVector::from_blocks(
            PairwiseLayout::PottsAgreement,
            2,
            &[vec![0.0, 0.4], vec![0.1, 0.0]],
            &[vec![0.3, 0.0]],
        )
        .unwrap();
        let mu = StatVector::from_blocks(
            PairwiseLayout::PottsAgreement,
            2,
            &[vec![0.9, 0.1], vec![0.2, 0.8]],
            &[vec![0.5, 0.5]],
        )
        .unwrap();
        let spec = MomentSpec::new(mu, 2.0, 1.0, vec![true; 2]).unwrap();
        let cfg = HerdingConfig::new(t, spec, 1, Inference::BruteForce);
        let set = herding_run(&g, &cfg).unwrap();
        assert_eq!(set.samples[0].to_vec(), vec![1, 1]);
    }

    #[test]
    fn fixed_point_sample_repeats_with_zero_error() {
        let g = CrfGraph::new(2, [(0, 1)]).unwrap();
        let t = StatVector::from_blocks(
            PairwiseLayout::PottsAgreement,
            2,
            &[vec![1.0, 0.0], vec![0.0, 0.5]],
            &[vec![0.2, 0.0]],
        )
        .unwrap();
        let xbar: Labeling = vec![0, 1].into();
        let mu = sufficient_stats(&g, 2, PairwiseLayout::PottsAgreement, &xbar).unwrap();
        let spec = MomentSpec::new(mu, 1.0, 1.0, vec![true; 2]).unwrap();
        let cfg = HerdingConfig::new(t, spec, 5, Inference::BruteForce);
        let set = herding_run(&g, &cfg).unwrap();
        assert!(set.samples.iter().all(|s| *s == xbar));
        assert!(set.error_trace.iter().all(|&e| e == 0.0));
        assert!(set.condition_trace.iter().all(|&c| c));
    }

    #[test]
    fn divmbest_with_zero_lambda_repeats_map() {
        let (g, t) = one_node([0.3, 0.2]);
        let set = divmbest_run(&g, &t, 0.0, 4, Inference::BruteForce).unwrap();
        assert!(set.samples.iter().all(|s| s.to_vec() == vec![0]));
    }

    #[test]
    fn reconstruction_error_examples() {
        let (g, _) = one_node([0.0, 0.0]);
        let spec = unary_spec(&g, [0.5, 0.5], 1.0);
        assert_eq!(reconstruction_error(&g, &spec, &[vec![0].into()]).unwrap(), 0.5);
        assert_eq!(
            reconstruction_error(&g, &spec, &[vec![0].into(), vec![1].into()]).unwrap(),
            0.0
        );
        assert!(reconstruction_error(&g, &spec, &[]).is_err());

        let spec = unary_spec(&g, [1.0, 0.0], 3.0);
        assert_eq!(reconstruction_error(&g, &spec, &[vec![0].into()]).unwrap(), 0.0);
        assert_eq!(reconstruction_error(&g, &spec, &[vec![1].into()]).unwrap(), 6.0);
    }

    #[test]
    fn objective_terms() {
        let g = CrfGraph::grid(3, 2).unwrap();
        let theta = StatVector::zeros(&g, 3, PairwiseLayout::PottsAgreement);
        let spec = MomentSpec::new(theta.clone(), 1.0, 1.0, vec![true; 6]).unwrap();
        let cfg = HerdingConfig::new(theta, spec, 1, Inference::BruteForce);
        let x: Labeling = vec![0, 1, 2, 2, 1, 0].into();
        let terms = diverse_objective_terms(&g, &x, std::slice::from_ref(&x), &cfg).unwrap();
        assert_eq!(terms.diversity, -(6.0 + 7.0));
        assert_eq!(terms.initialization, 0.0);
        assert_eq!(terms.moments, 0.0);
        assert_eq!(terms.total(), terms.diversity);
        assert!(diverse_objective(&g, &x, &[], &cfg).is_err());
    }

    #[test]
    fn marginals_examples() {
        let same = vec![Labeling::new(vec![1, 0]); 3];
        assert_eq!(mean_unary_marginals(&same, 2).unwrap(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let alt: Vec<Labeling> = (0..6).map(|k| Labeling::new(vec![k % 2])).collect();
        assert_eq!(mean_unary_marginals(&alt, 2).unwrap(), vec![vec![0.5, 0.5]]);
        assert!(mean_unary_marginals(&[], 2).is_err());
    }

    #[test]
    fn norm_cap_bounds_theta() {
        let (g, t) = one_node([3.0, 0.0]);
        let mut cfg = HerdingConfig::new(t, unary_spec(&g, [0.0, 0.0], 5.0), 1, Inference::BruteForce);
        cfg.theta_norm_cap = Some(1.0);
        let mut s = Sampler::herding(&g, &cfg).unwrap();
        s.step().unwrap();
        assert!(s.theta().norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn json_lines_one_record_per_sample() {
        let (g, t) = one_node([1.0, 0.0]);
        let set = divmbest_run(&g, &t, 1.0, 3, Inference::BruteForce).unwrap();
        let mut buf = Vec::new();
        set.write_json_lines(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let rec: SampleRecord = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(rec.m, 3);
        assert_eq!(rec.labeling.to_vec(), vec![1]);
    }
}
