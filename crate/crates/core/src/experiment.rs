//! Suite sweeps: instances × sampler configurations × rate grids × observed
//! fractions, scored with oracle and mode curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::crf::CrfInstance;
use crate::error::{CrfError, Result};
use crate::herding::{divmbest_run, herding_run, HerdingConfig, HypothesisSet};
use crate::inference::Inference;
use crate::moments::{moments_from_unary, moments_full, moments_zero, MomentSpec};
use crate::scene::Scene;
use crate::seg::{evaluate, generate_scene, mask_unaries, InstanceKind, MetricKind, PottsParams, SigmoidParams};

/// Header comment of the curve CSV; bump on any column change.
pub const CURVES_SCHEMA: &str = "# herdcrf-curves v1";
pub const CURVES_COLUMNS: &str = "config,method,moments,eta_u,eta_p,fraction,instance,m,oracle,mode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Divmbest,
    Herding,
}

/// Source of the target moments for a Herding run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentsSource {
    /// `μ_u = 0`, `η_p = 0`.
    Zero,
    /// `μ_u = θ̃_u`, `η_p = 0`.
    Unary,
    /// `μ = θ̃` over unary and pairwise blocks.
    Full,
}

impl MomentsSource {
    pub fn build(self, instance: &CrfInstance, eta_unary: f64, eta_pairwise: f64) -> Result<MomentSpec> {
        match self {
            MomentsSource::Zero => moments_zero(
                &instance.graph,
                instance.num_labels(),
                instance.theta.layout(),
                eta_unary,
            ),
            MomentsSource::Unary => moments_from_unary(instance, eta_unary),
            MomentsSource::Full => moments_full(instance, eta_unary, eta_pairwise),
        }
    }

    fn name(self) -> &'static str {
        match self {
            MomentsSource::Zero => "zero",
            MomentsSource::Unary => "unary",
            MomentsSource::Full => "full",
        }
    }
}

/// Draw hypotheses from `instance` with the given method and rates. For
/// divMbest `eta_unary` is `λ` and `moments` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn sample_hypotheses(
    instance: &CrfInstance,
    method: Method,
    moments: MomentsSource,
    eta_unary: f64,
    eta_pairwise: f64,
    num_samples: usize,
    inference: Inference,
    normalize_theta: bool,
) -> Result<HypothesisSet> {
    match method {
        Method::Divmbest => divmbest_run(&instance.graph, &instance.theta, eta_unary, num_samples, inference),
        Method::Herding => {
            let spec = moments
                .build(instance, eta_unary, eta_pairwise)?
                .with_normalization(normalize_theta);
            let cfg = HerdingConfig::new(instance.theta.clone(), spec, num_samples, inference);
            herding_run(&instance.graph, &cfg)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedInstances {
    pub kind: InstanceKind,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub labels: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Generated(GeneratedInstances),
    Files { paths: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub method: Method,
    #[serde(default = "default_moments")]
    pub moments: MomentsSource,
    pub eta_u: Vec<f64>,
    #[serde(default = "default_eta_p")]
    pub eta_p: Vec<f64>,
    /// Observed fractions for interactive masking; omitted = use unaries as given.
    #[serde(default)]
    pub observed_fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub normalize_theta: bool,
}

fn default_moments() -> MomentsSource {
    MomentsSource::Zero
}

fn default_eta_p() -> Vec<f64> {
    vec![0.0]
}

/// Pair of run names whose oracle gap is reported per observed fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub baseline: String,
    pub contender: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    pub m_max: usize,
    #[serde(default)]
    pub metric: MetricKind,
    /// Seed for interactive masks; instance `k` uses `mask_seed + k`.
    #[serde(default)]
    pub mask_seed: u64,
    #[serde(default)]
    pub inference: Inference,
    #[serde(default)]
    pub sigmoid: SigmoidParams,
    /// Defaults to the instance kind's Potts parameters.
    #[serde(default)]
    pub potts: Option<PottsParams>,
    pub instances: InstanceSource,
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub compare: Option<Comparison>,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = SuiteConfig::from_toml(&std::fs::read_to_string(path)?)?;
        // instance paths are relative to the suite file
        if let InstanceSource::Files { paths } = &mut cfg.instances {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_max == 0 {
            return Err(CrfError::invalid("m_max must be at least 1"));
        }
        if self.runs.is_empty() {
            return Err(CrfError::invalid("suite has no runs"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for run in &self.runs {
            if run.name.is_empty() || run.name.contains([',', '"', '\n']) {
                return Err(CrfError::invalid(format!("run name {:?} is not CSV-safe", run.name)));
            }
            if !seen.insert(run.name.as_str()) {
                return Err(CrfError::invalid(format!("duplicate run name {}", run.name)));
            }
            if run.eta_u.is_empty() || run.eta_p.is_empty() {
                return Err(CrfError::invalid(format!("run {} has an empty rate grid", run.name)));
            }
            if let Some(fr) = &run.observed_fractions {
                if fr.is_empty() || fr.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err(CrfError::invalid(format!("run {} has invalid observed fractions", run.name)));
                }
            }
        }
        if let Some(cmp) = &self.compare {
            for name in [&cmp.baseline, &cmp.contender] {
                if !seen.contains(name.as_str()) {
                    return Err(CrfError::invalid(format!("comparison names unknown run {name}")));
                }
            }
        }
        Ok(())
    }

    fn potts_for(&self, kind: InstanceKind) -> PottsParams {
        self.potts.unwrap_or_else(|| kind.default_potts())
    }

    /// Build the unmasked instances of the suite.
    pub fn instances(&self) -> Result<Vec<CrfInstance>> {
        match &self.instances {
            InstanceSource::Generated(g) => (0..g.count)
                .map(|k| {
                    generate_scene(g.kind, g.width, g.height, g.labels, g.noise, g.seed + k as u64)?
                        .to_instance(&self.sigmoid, &self.potts_for(g.kind))
                })
                .collect(),
            InstanceSource::Files { paths } => paths
                .iter()
                .map(|p| Scene::load(p)?.to_instance(&self.sigmoid, &self.potts_for(InstanceKind::GridSemantic)))
                .collect(),
        }
    }
}

/// One point of a run's rate/fraction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: String,
    pub method: Method,
    pub moments: MomentsSource,
    pub eta_u: f64,
    pub eta_p: f64,
    /// `None` when unaries are used as given.
    pub fraction: Option<f64>,
}

impl GridPoint {
    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.config,
            self.eta_u,
            self.eta_p,
            self.fraction.map_or("-".to_string(), |f| f.to_string())
        )
    }
}

fn expand(cfg: &SuiteConfig) -> Vec<(GridPoint, bool)> {
    let mut points = Vec::new();
    for run in &cfg.runs {
        let fractions: Vec<Option<f64>> = match &run.observed_fractions {
            Some(f) => f.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        for &fraction in &fractions {
            for &eta_u in &run.eta_u {
                for &eta_p in &run.eta_p {
                    points.push((
                        GridPoint {
                            config: run.name.clone(),
                            method: run.method,
                            moments: run.moments,
                            eta_u,
                            eta_p,
                            fraction,
                        },
                        run.normalize_theta,
                    ));
                }
            }
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub point: GridPoint,
    pub instance: usize,
    pub oracle: Vec<f64>,
    pub mode: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub point: GridPoint,
    pub instance: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub point: GridPoint,
    pub instances: usize,
    pub mean_oracle: f64,
    pub mean_mode: f64,
    pub mean_map: f64,
}

/// Mode accuracy of one run across its `η_u` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub config: String,
    pub eta_p: f64,
    pub fraction: Option<f64>,
    pub eta_u: Vec<f64>,
    pub mean_mode: Vec<f64>,
    pub kendall_tau: f64,
    pub mode_range: f64,
    pub non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub fraction: Option<f64>,
    pub baseline_oracle: f64,
    pub contender_oracle: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub suite: String,
    pub m_max: usize,
    pub metric: MetricKind,
    pub runs_total: usize,
    pub runs_failed: usize,
    pub failures: Vec<RunFailure>,
    pub aggregates: Vec<Aggregate>,
    pub trends: Vec<Trend>,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub outcomes: Vec<RunOutcome>,
    pub summary: Summary,
}

/// Kendall rank correlation, ties contributing zero.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = (xs[j] - xs[i]).signum() * f64::from(xs[j] != xs[i]);
            let dy = (ys[j] - ys[i]).signum() * f64::from(ys[j] != ys[i]);
            s += dx * dy;
        }
    }
    s / (n * (n - 1) / 2) as f64
}

/// Run every (grid point, instance) pair. Results come back in grid order,
/// independent of how the work is scheduled across threads.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteResult> {
    cfg.validate()?;
    let instances = cfg.instances()?;
    let points = expand(cfg);

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..instances.len()).map(move |k| (p, k)))
        .collect();
    let results: Vec<std::result::Result<RunOutcome, RunFailure>> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let (point, normalize) = &points[p];
            run_one(cfg, point, *normalize, &instances[k], k).map_err(|e| RunFailure {
                point: point.clone(),
                instance: k,
                error: e.to_string(),
            })
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    let summary = summarize(cfg, &points, &outcomes, failures, jobs.len());
    Ok(SuiteResult { outcomes, summary })
}

fn run_one(cfg: &SuiteConfig, point: &GridPoint, normalize: bool, base: &CrfInstance, k: usize) -> Result<RunOutcome> {
    let masked;
    let instance = match point.fraction {
        Some(f) => {
            masked = mask_unaries(base, f, cfg.mask_seed + k as u64)?;
            &masked
        }
        None => base,
    };
    let set = sample_hypotheses(
        instance,
        point.method,
        point.moments,
        point.eta_u,
        point.eta_p,
        cfg.m_max,
        cfg.inference,
        normalize,
    )?;
    let report = evaluate(&set.samples, instance, cfg.metric)?;
    Ok(RunOutcome {
        point: point.clone(),
        instance: k,
        oracle: report.oracle_accuracy,
        mode: report.mode_accuracy,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn summarize(
    cfg: &SuiteConfig,
    points: &[(GridPoint, bool)],
    outcomes: &[RunOutcome],
    failures: Vec<RunFailure>,
    total: usize,
) -> Summary {
    let aggregates: Vec<Aggregate> = points
        .iter()
        .map(|(point, _)| {
            let key = point.key();
            let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.point.key() == key).collect();
            Aggregate {
                point: point.clone(),
                instances: runs.len(),
                mean_oracle: mean(runs.iter().map(|o| *o.oracle.last().unwrap())),
                mean_mode: mean(runs.iter().map(|o| *o.mode.last().unwrap())),
                mean_map: mean(runs.iter().map(|o| o.oracle[0])),
            }
        })
        .collect();

    // group by (config, eta_p, fraction); the η_u grid order is preserved
    let mut groups: BTreeMap<(usize, String), Vec<&Aggregate>> = BTreeMap::new();
    for (idx, a) in aggregates.iter().enumerate() {
        let first = aggregates
            .iter()
            .position(|b| {
                b.point.config == a.point.config && b.point.eta_p == a.point.eta_p && b.point.fraction == a.point.fraction
            })
            .unwrap_or(idx);
        groups
            .entry((first, a.point.config.clone()))
            .or_default()
            .push(a);
    }
    let trends: Vec<Trend> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let eta_u: Vec<f64> = g.iter().map(|a| a.point.eta_u).collect();
            let mean_mode: Vec<f64> = g.iter().map(|a| a.mean_mode).collect();
            let hi = mean_mode.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = mean_mode.iter().copied().fold(f64::INFINITY, f64::min);
            Trend {
                config: g[0].point.config.clone(),
                eta_p: g[0].point.eta_p,
                fraction: g[0].point.fraction,
                kendall_tau: kendall_tau(&eta_u, &mean_mode),
                mode_range: hi - lo,
                non_increasing: mean_mode.windows(2).all(|w| w[1] <= w[0]),
                eta_u,
                mean_mode,
            }
        })
        .collect();

    let gaps = cfg
        .compare
        .as_ref()
        .map(|cmp| {
            let mut fractions: Vec<Option<f64>> = Vec::new();
            for a in aggregates.iter().filter(|a| a.point.config == cmp.baseline) {
                if !fractions.contains(&a.point.fraction) {
                    fractions.push(a.point.fraction);
                }
            }
            // best rate setting per run and fraction
            let best = |config: &str, fraction: Option<f64>| {
                aggregates
                    .iter()
                    .filter(|a| a.point.config == config && a.point.fraction == fraction)
                    .map(|a| a.mean_oracle)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            fractions
                .into_iter()
                .map(|fraction| {
                    let b = best(&cmp.baseline, fraction);
                    let c = best(&cmp.contender, fraction);
                    Gap {
                        fraction,
                        baseline_oracle: b,
                        contender_oracle: c,
                        gap: c - b,
                    }
                })
                .collect()
        })
        .unwrap_or_default();

    Summary {
        suite: cfg.name.clone(),
        m_max: cfg.m_max,
        metric: cfg.metric,
        runs_total: total,
        runs_failed: failures.len(),
        failures,
        aggregates,
        trends,
        gaps,
    }
}

/// Curve CSV: schema comment, column header, one row per `(run, instance, m)`.
pub fn write_curves_csv<W: Write>(outcomes: &[RunOutcome], mut out: W) -> Result<()> {
    writeln!(out, "{CURVES_SCHEMA}")?;
    writeln!(out, "{CURVES_COLUMNS}")?;
    for o in outcomes {
        let p = &o.point;
        let method = match p.method {
            Method::Divmbest => "divmbest",
            Method::Herding => "herding",
        };
        let fraction = p.fraction.map_or(String::new(), |f| f.to_string());
        for (m, (oracle, mode)) in o.oracle.iter().zip(&o.mode).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                p.config,
                method,
                p.moments.name(),
                p.eta_u,
                p.eta_p,
                fraction,
                o.instance,
                m + 1,
                oracle,
                mode
            )?;
        }
    }
    Ok(())
}

/// Least-squares slope of `ln error` against `ln m` over points with
/// `lo ≤ m ≤ hi` and positive error, with its standard error. `None` with
/// fewer than three usable points.
pub fn fit_loglog(trace: &[(usize, f64)], lo: usize, hi: usize) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|(m, e)| *m >= lo && *m <= hi && *e > 0.0 && e.is_finite())
        .map(|(m, e)| ((*m as f64).ln(), e.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Some((slope, (rss / (nf - 2.0) / sxx).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
        name = "tiny"
        m_max = 1
        [inference]
        kind = "elimination"
        [instances]
        kind = "grid-semantic"
        count = 1
        width = 4
        height = 3
        labels = 3
        noise = 0.4
        seed = 11
        [[runs]]
        name = "div"
        method = "divmbest"
        eta_u = [0.5]
    "#;

    #[test]
    fn loglog_recovers_power_law() {
        let trace: Vec<(usize, f64)> = (1..=64).map(|m| (m, 3.0 / m as f64)).collect();
        let (slope, se) = fit_loglog(&trace, 1, 64).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
        assert!(se < 1e-9);
        assert!(fit_loglog(&trace, 10, 11).is_none());
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn single_hypothesis_oracle_equals_mode() {
        let cfg = SuiteConfig::from_toml(TINY).unwrap();
        let res = run_suite(&cfg).unwrap();
        assert_eq!(res.outcomes.len(), 1);
        let o = &res.outcomes[0];
        assert_eq!(o.oracle, o.mode);
        assert_eq!(res.summary.aggregates[0].mean_map, o.oracle[0]);
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = SuiteConfig::from_toml(&TINY.replace("m_max = 1", "m_max = 4")).unwrap();
        let render = || {
            let mut buf = Vec::new();
            write_curves_csv(&run_suite(&cfg).unwrap().outcomes, &mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(CURVES_SCHEMA));
        assert_eq!(text.lines().count(), 2 + 4);
    }

    #[test]
    fn rejects_bad_suites() {
        assert!(SuiteConfig::from_toml(&TINY.replace("m_max = 1", "m_max = 0")).is_err());
        assert!(SuiteConfig::from_toml(&TINY.replace("name = \"div\"", "name = \"a,b\"")).is_err());
        assert!(SuiteConfig::from_toml("name = 3").is_err());
    }
}
