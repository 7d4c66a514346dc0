//! Invariants as seeded property checks. Each check returns the first
//! failing case (after shrinking) as an error string.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use herdcrf::experiment::MomentsSource;
use herdcrf::inference::check_herding_condition;
use herdcrf::moments::{average_stats, moments_from_samples};
use herdcrf::seg::{evaluate, generate_instance, mask_unaries, mode_labeling, score, InstanceKind, MetricKind, PottsParams, SigmoidParams};
use herdcrf::{
    energy, herding_run, inner_product, map_bruteforce, map_lbp, moments_from_unary, moments_full, moments_zero,
    sufficient_stats, unary_similarity, validate_polytope, CrfGraph, CrfInstance, HerdingConfig, Inference, LabelSpace,
    Labeling, LbpConfig, PairwiseLayout,
};

use crate::families::{random_labeling, random_theta, random_tree, rng, small_instance};
use crate::oracles;

pub type Check = fn() -> Result<(), String>;

/// Every invariant check with a short name.
pub const ALL: &[(&str, Check)] = &[
    ("energy equals inner product", energy_equals_inner_product),
    ("statistic blocks sum to one", stat_blocks_sum_to_one),
    ("similarity is N minus Hamming", similarity_is_n_minus_hamming),
    ("Potts and Full layouts agree", potts_and_full_agree),
    ("LBP exact on trees", lbp_exact_on_trees),
    ("brute force dominates LBP", bruteforce_dominates_lbp),
    ("condition holds for polytope moments", condition_holds_in_polytope),
    ("damping 0 and 0.5 agree on trees", damping_agrees_on_trees),
    ("unary moments in polytope", unary_moments_in_polytope),
    ("sample averages in polytope", averages_in_polytope),
    ("zero moments outside polytope", zero_moments_outside_polytope),
    ("full moments symmetric under edge flip", full_moments_edge_flip),
    ("herding is deterministic", herding_deterministic),
    ("condition trace all true with exact MAP", condition_trace_exact),
    ("error trace matches recomputation", error_trace_matches_oracle),
    ("oracle curve non-decreasing", oracle_curve_monotone),
    ("mode of copies and lowest-label tie-break", mode_tie_break),
    ("metrics match confusion matrix", metrics_match_confusion),
    ("full masking recovers ground truth", full_mask_recovers_gt),
    ("mask keeps ceil(f N) nodes", mask_count),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn err<E: std::fmt::Display>(e: E) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

pub fn energy_equals_inner_product() -> Result<(), String> {
    run(300, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 8, 4);
        let x = Labeling::new(random_labeling(g.node_count(), theta.num_labels(), &mut rng(seed ^ 1)));
        let phi = sufficient_stats(&g, theta.num_labels(), theta.layout(), &x).map_err(err)?;
        let e = energy(&g, &theta, &x).map_err(err)?;
        prop_assert_eq!(e, inner_product(&theta, &phi).map_err(err)?);
        prop_assert!((e - oracles::energy(&g, &theta, &x)).abs() < 1e-12);
        Ok(())
    })
}

pub fn stat_blocks_sum_to_one() -> Result<(), String> {
    run(300, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 8, 4);
        let x = Labeling::new(random_labeling(g.node_count(), theta.num_labels(), &mut rng(seed ^ 2)));
        let phi = sufficient_stats(&g, theta.num_labels(), theta.layout(), &x).map_err(err)?;
        for i in 0..g.node_count() {
            prop_assert_eq!(phi.unary_block(i).iter().sum::<f64>(), 1.0);
        }
        for e in 0..g.edge_count() {
            prop_assert_eq!(phi.pairwise_block(e).iter().sum::<f64>(), 1.0);
        }
        Ok(())
    })
}

pub fn similarity_is_n_minus_hamming() -> Result<(), String> {
    let pair = (1usize..30).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)));
    run(300, pair, |(x, y)| {
        let hamming = x.iter().zip(&y).filter(|(a, b)| a != b).count();
        let s = unary_similarity(&Labeling::new(x.clone()), &Labeling::new(y.clone())).map_err(err)?;
        prop_assert_eq!(s, x.len() - hamming);
        Ok(())
    })
}

pub fn potts_and_full_agree() -> Result<(), String> {
    run(100, any::<u64>(), |seed| {
        let mut r = rng(seed);
        let n = r.random_range(2..=6);
        let l = r.random_range(2..=3);
        let g = random_tree(n, &mut r);
        let potts = random_theta(&g, l, PairwiseLayout::PottsAgreement, 1.0, &mut r);
        let full = potts.to_full();
        // independent embedding: a on the diagonal, b elsewhere
        for e in 0..g.edge_count() {
            let (a, b) = (potts.pairwise_block(e)[0], potts.pairwise_block(e)[1]);
            for p in 0..l {
                for q in 0..l {
                    prop_assert_eq!(full.pairwise_block(e)[p * l + q], if p == q { a } else { b });
                }
            }
        }
        for x in oracles::labelings(n, l) {
            let x = Labeling::new(x);
            let (ep, ef) = (energy(&g, &potts, &x).map_err(err)?, energy(&g, &full, &x).map_err(err)?);
            prop_assert!((ep - ef).abs() < 1e-12, "{} vs {}", ep, ef);
        }
        Ok(())
    })
}

pub fn lbp_exact_on_trees() -> Result<(), String> {
    run(200, any::<u64>(), |seed| {
        let mut r = rng(seed);
        let n = r.random_range(1..=8);
        let l = r.random_range(2..=4);
        let g = random_tree(n, &mut r);
        let layout = crate::families::random_layout(&mut r);
        let theta = random_theta(&g, l, layout, 1.0, &mut r);
        let bf = map_bruteforce(&g, &theta).map_err(err)?;
        let lbp = map_lbp(&g, &theta, &LbpConfig::default()).map_err(err)?;
        prop_assert_eq!(&bf.labeling, &lbp.labeling);
        let (oracle_x, _) = oracles::argmax(n, l, |x| oracles::energy(&g, &theta, x));
        prop_assert_eq!(bf.labeling.to_vec(), oracle_x);
        Ok(())
    })
}

pub fn bruteforce_dominates_lbp() -> Result<(), String> {
    run(150, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 8, 3);
        let bf = map_bruteforce(&g, &theta).map_err(err)?;
        let lbp = map_lbp(&g, &theta, &LbpConfig::default()).map_err(err)?;
        prop_assert!(bf.energy_value >= lbp.energy_value);
        Ok(())
    })
}

pub fn condition_holds_in_polytope() -> Result<(), String> {
    run(150, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 7, 3);
        let mut r = rng(seed ^ 3);
        let (n, l) = (g.node_count(), theta.num_labels());
        let k = r.random_range(1..=6);
        let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut mu = herdcrf::StatVector::zeros(&g, l, theta.layout());
        for w in &weights {
            let x = Labeling::new(random_labeling(n, l, &mut r));
            let phi = sufficient_stats(&g, l, theta.layout(), &x).map_err(err)?;
            for (m, p) in mu.unary_mut().iter_mut().zip(phi.unary()) {
                *m += w / total * p;
            }
            for (m, p) in mu.pairwise_mut().iter_mut().zip(phi.pairwise()) {
                *m += w / total * p;
            }
        }
        let x = map_bruteforce(&g, &theta).map_err(err)?.labeling;
        prop_assert!(check_herding_condition(&g, &theta, &mu, &x).map_err(err)?);
        Ok(())
    })
}

pub fn damping_agrees_on_trees() -> Result<(), String> {
    run(150, any::<u64>(), |seed| {
        let mut r = rng(seed);
        let n = r.random_range(2..=10);
        let l = r.random_range(2..=4);
        let g = random_tree(n, &mut r);
        let theta = random_theta(&g, l, PairwiseLayout::PottsAgreement, 1.0, &mut r);
        let undamped = LbpConfig {
            damping: 0.0,
            ..LbpConfig::default()
        };
        let a = map_lbp(&g, &theta, &undamped).map_err(err)?;
        let b = map_lbp(&g, &theta, &LbpConfig::default()).map_err(err)?;
        prop_assert_eq!(a.labeling, b.labeling);
        Ok(())
    })
}

fn instance_from(seed: u64, observed_prob: f64) -> CrfInstance {
    let (g, theta) = small_instance(seed, 8, 4);
    let mut r = rng(seed ^ 4);
    let mut inst = CrfInstance::new(g, LabelSpace::new(theta.num_labels()).unwrap(), theta).unwrap();
    inst.observed = (0..inst.graph.node_count()).map(|_| r.random_bool(observed_prob)).collect();
    inst
}

fn simplex(block: &[f64]) -> bool {
    block.iter().all(|&v| v >= 0.0) && (block.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

pub fn unary_moments_in_polytope() -> Result<(), String> {
    run(200, any::<u64>(), |seed| {
        let inst = instance_from(seed, 0.7);
        let spec = moments_from_unary(&inst, 1.0).map_err(err)?;
        prop_assert!(spec.in_polytope);
        for i in 0..inst.graph.node_count() {
            if inst.observed[i] {
                prop_assert!(simplex(spec.mu.unary_block(i)));
            }
        }
        Ok(())
    })
}

pub fn averages_in_polytope() -> Result<(), String> {
    run(200, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 8, 4);
        let mut r = rng(seed ^ 5);
        let k = r.random_range(1..=12);
        let stats: Vec<_> = (0..k)
            .map(|_| {
                let x = Labeling::new(random_labeling(g.node_count(), theta.num_labels(), &mut r));
                sufficient_stats(&g, theta.num_labels(), theta.layout(), &x).unwrap()
            })
            .collect();
        prop_assert!(validate_polytope(&average_stats(&stats).map_err(err)?));
        Ok(())
    })
}

pub fn zero_moments_outside_polytope() -> Result<(), String> {
    run(100, any::<u64>(), |seed| {
        let (g, theta) = small_instance(seed, 8, 4);
        let spec = moments_zero(&g, theta.num_labels(), theta.layout(), 1.0).map_err(err)?;
        prop_assert!(!validate_polytope(&spec.mu));
        prop_assert!(!spec.in_polytope);
        Ok(())
    })
}

pub fn full_moments_edge_flip() -> Result<(), String> {
    run(100, any::<u64>(), |seed| {
        let mut r = rng(seed);
        let n = r.random_range(2..=8);
        let l = r.random_range(2..=4);
        let g = random_tree(n, &mut r);
        let flipped = CrfGraph::new(n, g.edges().iter().map(|&(i, j)| (j, i))).map_err(err)?;
        let unary: Vec<Vec<f64>> = (0..n).map(|_| (0..l).map(|_| r.random_range(-3.0..0.0)).collect()).collect();
        let pairwise: Vec<Vec<f64>> = (0..g.edge_count()).map(|_| vec![0.0, -r.random_range(0.0..2.0)]).collect();
        let build = |graph: CrfGraph| {
            let theta = herdcrf::StatVector::from_blocks(PairwiseLayout::PottsAgreement, l, &unary, &pairwise).unwrap();
            CrfInstance::new(graph, LabelSpace::new(l).unwrap(), theta).unwrap()
        };
        let a = moments_full(&build(g), 1.0, 0.5).map_err(err)?;
        let b = moments_full(&build(flipped), 1.0, 0.5).map_err(err)?;
        prop_assert_eq!(a.mu, b.mu);
        Ok(())
    })
}

fn polytope_config(seed: u64, inference: Inference, m: usize) -> (CrfGraph, HerdingConfig) {
    let (g, theta) = small_instance(seed, 6, 3);
    let mut r = rng(seed ^ 6);
    let samples: Vec<Labeling> = (0..r.random_range(1..=5))
        .map(|_| Labeling::new(random_labeling(g.node_count(), theta.num_labels(), &mut r)))
        .collect();
    let spec = moments_from_samples(&g, theta.num_labels(), theta.layout(), &samples, r.random_range(0.2..2.0), r.random_range(0.2..2.0)).unwrap();
    (g, HerdingConfig::new(theta, spec, m, inference))
}

pub fn herding_deterministic() -> Result<(), String> {
    run(40, any::<u64>(), |seed| {
        let (g, cfg) = polytope_config(seed, Inference::default(), 30);
        prop_assert_eq!(herding_run(&g, &cfg).map_err(err)?, herding_run(&g, &cfg).map_err(err)?);
        Ok(())
    })
}

pub fn condition_trace_exact() -> Result<(), String> {
    run(40, any::<u64>(), |seed| {
        let (g, cfg) = polytope_config(seed, Inference::BruteForce, 25);
        prop_assert!(cfg.spec.in_polytope);
        let set = herding_run(&g, &cfg).map_err(err)?;
        prop_assert!(set.condition_trace.iter().all(|&c| c));
        Ok(())
    })
}

pub fn error_trace_matches_oracle() -> Result<(), String> {
    run(40, any::<u64>(), |seed| {
        let (g, cfg) = polytope_config(seed, Inference::Elimination, 25);
        let set = herding_run(&g, &cfg).map_err(err)?;
        let samples: Vec<Vec<usize>> = set.samples.iter().map(|x| x.to_vec()).collect();
        for m in 1..=samples.len() {
            let expected = oracles::weighted_error(&g, &cfg.spec, &samples[..m]);
            prop_assert!((set.error_trace[m - 1] - expected).abs() < 1e-9, "m={} {} vs {}", m, set.error_trace[m - 1], expected);
        }
        Ok(())
    })
}

fn hypotheses(seed: u64) -> (Vec<Labeling>, Labeling, usize) {
    let mut r = rng(seed);
    let n = r.random_range(1..=30);
    let l = r.random_range(2..=5);
    let m = r.random_range(1..=12);
    let gt = Labeling::new(random_labeling(n, l, &mut r));
    let hs = (0..m).map(|_| Labeling::new(random_labeling(n, l, &mut r))).collect();
    (hs, gt, l)
}

pub fn oracle_curve_monotone() -> Result<(), String> {
    run(200, any::<u64>(), |seed| {
        let (hs, gt, l) = hypotheses(seed);
        let g = CrfGraph::new(gt.len(), []).map_err(err)?;
        let theta = herdcrf::StatVector::zeros(&g, l, PairwiseLayout::PottsAgreement);
        let mut inst = CrfInstance::new(g, LabelSpace::new(l).unwrap(), theta).map_err(err)?;
        inst.ground_truth = Some(gt.clone());
        for metric in [MetricKind::PerClassAccuracy, MetricKind::Jaccard] {
            let report = evaluate(&hs, &inst, metric).map_err(err)?;
            prop_assert!(report.oracle_accuracy.windows(2).all(|w| w[1] >= w[0]));
            let mut best = f64::NEG_INFINITY;
            for (k, h) in hs.iter().enumerate() {
                let (acc, jac) = oracles::confusion_scores(h, &gt, l);
                best = best.max(if metric == MetricKind::Jaccard { jac } else { acc });
                prop_assert!((report.oracle_accuracy[k] - best).abs() < 1e-9);
            }
        }
        Ok(())
    })
}

pub fn mode_tie_break() -> Result<(), String> {
    run(200, any::<u64>(), |seed| {
        let (hs, _, l) = hypotheses(seed);
        let copies = vec![hs[0].clone(); hs.len()];
        prop_assert_eq!(&mode_labeling(&copies, l).map_err(err)?, &hs[0]);
        // independent vote count, ties to the lowest label
        let mode = mode_labeling(&hs, l).map_err(err)?;
        for i in 0..hs[0].len() {
            let mut counts = vec![0; l];
            hs.iter().for_each(|h| counts[h[i]] += 1);
            let top = *counts.iter().max().unwrap();
            prop_assert_eq!(mode[i], counts.iter().position(|&c| c == top).unwrap());
        }
        Ok(())
    })
}

pub fn metrics_match_confusion() -> Result<(), String> {
    run(300, any::<u64>(), |seed| {
        let (hs, gt, l) = hypotheses(seed);
        let (acc, jac) = oracles::confusion_scores(&hs[0], &gt, l);
        let (a, _) = score(&hs[0], &gt, l, MetricKind::PerClassAccuracy).map_err(err)?;
        let (j, _) = score(&hs[0], &gt, l, MetricKind::Jaccard).map_err(err)?;
        prop_assert!((a - acc).abs() < 1e-9 && (j - jac).abs() < 1e-9);
        Ok(())
    })
}

pub fn full_mask_recovers_gt() -> Result<(), String> {
    run(20, 0u64..1000, |seed| {
        let inst = generate_instance(InstanceKind::GridInteractive, 5, 4, 3, 0.0, seed, &SigmoidParams::default(), &PottsParams::interactive())
            .map_err(err)?;
        let masked = mask_unaries(&inst, 1.0, seed).map_err(err)?;
        let spec = MomentsSource::Full.build(&masked, 0.75, 0.25).map_err(err)?;
        let set = herding_run(&masked.graph, &HerdingConfig::new(masked.theta.clone(), spec, 3, Inference::default())).map_err(err)?;
        let gt = masked.ground_truth.clone().unwrap();
        prop_assert!(set.samples.contains(&gt));
        Ok(())
    })
}

pub fn mask_count() -> Result<(), String> {
    run(100, (any::<u64>(), 0.01f64..=1.0), |(seed, f)| {
        let inst = generate_instance(InstanceKind::GridSemantic, 6, 5, 3, 0.3, seed, &SigmoidParams::default(), &PottsParams::semantic())
            .map_err(err)?;
        let masked = mask_unaries(&inst, f, seed).map_err(err)?;
        let kept = masked.observed.iter().filter(|&&o| o).count();
        prop_assert_eq!(kept, (f * 30.0).ceil() as usize);
        for i in 0..30 {
            if !masked.observed[i] && masked.theta.unary_block(i).iter().any(|&t| t != 0.0) {
                return Err(fail(format!("unobserved node {i} kept a unary")));
            }
        }
        Ok(())
    })
}
