use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use herdcrf::experiment::{fit_loglog, run_suite, sample_hypotheses, write_curves_csv, Method, MomentsSource, SuiteConfig};
use herdcrf::moments::{moments_from_samples, random_labelings};
use herdcrf::scene::Scene;
use herdcrf::seg::{generate_scene, mask_unaries, InstanceKind, PottsParams, SigmoidParams};
use herdcrf::{herding_run, CrfError, CrfInstance, HerdingConfig, Inference, LbpConfig};

#[derive(Parser)]
#[command(name = "herdcrf", version, about = "Diverse M-best CRF labelings via Herding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-blob grid scene as JSON.
    Generate(GenerateArgs),
    /// Extract hypotheses from one instance as JSON Lines.
    Sample(SampleArgs),
    /// Run a suite sweep and write curves.csv and summary.json.
    Experiment(ExperimentArgs),
    /// Trace the reconstruction error against M and fit its log-log slope.
    Convergence(ConvergenceArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Semantic)]
    kind: KindArg,
    #[arg(long, default_value_t = 12)]
    width: usize,
    #[arg(long, default_value_t = 12)]
    height: usize,
    #[arg(long, default_value_t = 4)]
    labels: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Semantic,
    Interactive,
}

impl From<KindArg> for InstanceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Semantic => InstanceKind::GridSemantic,
            KindArg::Interactive => InstanceKind::GridInteractive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Divmbest,
    Herding,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MomentsArg {
    Zero,
    Unary,
    Full,
}

impl From<MomentsArg> for MomentsSource {
    fn from(m: MomentsArg) -> Self {
        match m {
            MomentsArg::Zero => MomentsSource::Zero,
            MomentsArg::Unary => MomentsSource::Unary,
            MomentsArg::Full => MomentsSource::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InferenceArg {
    Bruteforce,
    Elimination,
    Lbp,
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[arg(long, default_value_t = -7.0, allow_hyphen_values = true)]
    sigmoid_a: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    sigmoid_b: f64,
    /// Potts color-distance decay.
    #[arg(long, default_value_t = 10.0)]
    decay: f64,
    /// Potts weight.
    #[arg(long, default_value_t = 0.08)]
    weight: f64,
    /// Keep ground-truth unaries on this fraction of nodes, drop the rest.
    #[arg(long)]
    observed_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    mask_seed: u64,
}

#[derive(Args, Serialize)]
struct InferenceOpts {
    #[arg(long, value_enum, default_value_t = InferenceArg::Lbp)]
    inference: InferenceArg,
    #[arg(long, default_value_t = 200)]
    lbp_iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    lbp_damping: f64,
}

impl InferenceOpts {
    fn build(&self) -> Inference {
        match self.inference {
            InferenceArg::Bruteforce => Inference::BruteForce,
            InferenceArg::Elimination => Inference::Elimination,
            InferenceArg::Lbp => Inference::Lbp(LbpConfig {
                max_iterations: self.lbp_iterations,
                damping: self.lbp_damping,
                ..LbpConfig::default()
            }),
        }
    }
}

#[derive(Args, Serialize)]
struct SampleArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Divmbest)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = MomentsArg::Zero)]
    moments: MomentsArg,
    #[arg(long, default_value_t = 0.5)]
    eta_u: f64,
    #[arg(long, default_value_t = 0.0)]
    eta_p: f64,
    /// divMbest rate.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Rescale θ after every update to at most this norm.
    #[arg(long)]
    norm_cap: Option<f64>,
    #[command(flatten)]
    inference: InferenceOpts,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON Lines output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest.json` when --out is given.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExperimentArgs {
    suite: PathBuf,
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct ConvergenceArgs {
    instance: PathBuf,
    /// zero | unary | full | samples:K:SEED (mean statistics of K seeded random labelings).
    #[arg(long, default_value = "samples:10:0")]
    moments: String,
    #[arg(long, default_value_t = 1024)]
    m_max: usize,
    #[arg(long, default_value_t = 1.0)]
    eta_u: f64,
    #[arg(long, default_value_t = 1.0)]
    eta_p: f64,
    #[arg(long)]
    norm_cap: Option<f64>,
    /// Smallest M used by the slope fit.
    #[arg(long, default_value_t = 16)]
    fit_from: usize,
    #[command(flatten)]
    inference: InferenceOpts,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    command_line: Vec<String>,
    config_hash: String,
    instance_digest: Option<String>,
    version: &'static str,
    started_unix_secs: u64,
    duration_secs: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Manifest {
    start: Instant,
    config_hash: String,
    instance_digest: Option<String>,
}

impl Manifest {
    fn begin(config: &impl Serialize, instance_bytes: Option<&[u8]>) -> anyhow::Result<Self> {
        let instance_digest = instance_bytes.map(sha256_hex);
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(config)?);
        if let Some(d) = &instance_digest {
            hasher.update(d.as_bytes());
        }
        Ok(Manifest {
            start: Instant::now(),
            config_hash: hex::encode(hasher.finalize()),
            instance_digest,
        })
    }

    fn write(self, path: &Path) -> anyhow::Result<()> {
        let manifest = RunManifest {
            command_line: std::env::args().collect(),
            config_hash: self.config_hash,
            instance_digest: self.instance_digest,
            version: env!("CARGO_PKG_VERSION"),
            started_unix_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
                .saturating_sub(self.start.elapsed().as_secs()),
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

fn manifest_path(out: &Option<PathBuf>, explicit: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_instance(path: &Path, model: &ModelArgs) -> anyhow::Result<(CrfInstance, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CrfError::Parse(e.to_string()))?;
    let scene = Scene::from_json(&text)?;
    let sigmoid = SigmoidParams {
        a: model.sigmoid_a,
        b: model.sigmoid_b,
    };
    let potts = PottsParams::new(model.decay, model.weight)?;
    let mut instance = scene.to_instance(&sigmoid, &potts)?;
    if let Some(f) = model.observed_fraction {
        instance = mask_unaries(&instance, f, model.mask_seed)?;
    }
    Ok((instance, bytes))
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let scene = generate_scene(args.kind.into(), args.width, args.height, args.labels, args.noise, args.seed)?;
    let mut text = scene.to_json()?;
    text.push('\n');
    emit(&args.out, text.as_bytes())
}

fn cmd_sample(args: &SampleArgs) -> anyhow::Result<()> {
    let (instance, bytes) = load_instance(&args.instance, &args.model)?;
    let manifest = Manifest::begin(args, Some(&bytes))?;
    if args.m == 0 {
        return Err(CrfError::InvalidInput("--m must be at least 1".into()).into());
    }
    let inference = args.inference.build();
    let set = match args.method {
        MethodArg::Divmbest => {
            sample_hypotheses(&instance, Method::Divmbest, MomentsSource::Zero, args.lambda, 0.0, args.m, inference, false)?
        }
        MethodArg::Herding => {
            let spec = MomentsSource::from(args.moments).build(&instance, args.eta_u, args.eta_p)?;
            let mut cfg = HerdingConfig::new(instance.theta.clone(), spec, args.m, inference);
            cfg.theta_norm_cap = args.norm_cap;
            herding_run(&instance.graph, &cfg)?
        }
    };
    let mut buf = Vec::new();
    set.write_json_lines(&mut buf)?;
    emit(&args.out, &buf)?;
    if let Some(path) = manifest_path(&args.out, &args.manifest) {
        manifest.write(&path)?;
    }
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var("HERDCRF_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| CrfError::InvalidInput(format!("HERDCRF_THREADS must be a positive integer, got {value:?}")))?;
        if threads == 0 {
            return Err(CrfError::InvalidInput("HERDCRF_THREADS must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

/// Returns false when every run failed.
fn cmd_experiment(args: &ExperimentArgs) -> anyhow::Result<bool> {
    configure_threads()?;
    let text = fs::read(&args.suite).with_context(|| format!("reading {}", args.suite.display()))?;
    let cfg = SuiteConfig::load(&args.suite)?;
    let manifest = Manifest::begin(&cfg, Some(&text))?;
    let result = run_suite(&cfg)?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut csv = Vec::new();
    write_curves_csv(&result.outcomes, &mut csv)?;
    fs::write(args.out_dir.join("curves.csv"), csv)?;
    let mut summary = serde_json::to_string_pretty(&result.summary)?;
    summary.push('\n');
    fs::write(args.out_dir.join("summary.json"), summary)?;
    manifest.write(&args.out_dir.join("manifest.json"))?;

    for f in &result.summary.failures {
        eprintln!("run {} instance {} failed: {}", f.point.config, f.instance, f.error);
    }
    eprintln!(
        "{} of {} runs succeeded",
        result.summary.runs_total - result.summary.runs_failed,
        result.summary.runs_total
    );
    Ok(result.summary.runs_failed < result.summary.runs_total)
}

#[derive(Serialize)]
struct ConvergenceReport {
    moments: String,
    m_max: usize,
    fit_from: usize,
    trace: Vec<(usize, f64)>,
    slope: Option<f64>,
    slope_stderr: Option<f64>,
}

fn cmd_convergence(args: &ConvergenceArgs) -> anyhow::Result<()> {
    let (instance, bytes) = load_instance(&args.instance, &args.model)?;
    let manifest = Manifest::begin(args, Some(&bytes))?;
    if args.m_max == 0 {
        return Err(CrfError::InvalidInput("--m-max must be at least 1".into()).into());
    }
    let graph = &instance.graph;
    let spec = match args.moments.as_str() {
        "zero" => MomentsSource::Zero.build(&instance, args.eta_u, 0.0)?,
        "unary" => MomentsSource::Unary.build(&instance, args.eta_u, 0.0)?,
        "full" => MomentsSource::Full.build(&instance, args.eta_u, args.eta_p)?,
        other => {
            let parts: Vec<&str> = other.split(':').collect();
            let (count, seed) = match parts.as_slice() {
                ["samples", k, s] => (
                    k.parse::<usize>().map_err(|_| CrfError::InvalidInput(format!("bad sample count in {other:?}")))?,
                    s.parse::<u64>().map_err(|_| CrfError::InvalidInput(format!("bad seed in {other:?}")))?,
                ),
                _ => bail!(CrfError::InvalidInput(format!(
                    "moments must be zero, unary, full or samples:K:SEED, got {other:?}"
                ))),
            };
            if count == 0 {
                bail!(CrfError::InvalidInput("sample count must be positive".into()));
            }
            let samples = random_labelings(graph.node_count(), instance.num_labels(), count, seed);
            moments_from_samples(graph, instance.num_labels(), instance.theta.layout(), &samples, args.eta_u, args.eta_p)?
        }
    };
    let mut cfg = HerdingConfig::new(instance.theta.clone(), spec, args.m_max, args.inference.build());
    cfg.theta_norm_cap = args.norm_cap;
    let set = herding_run(graph, &cfg)?;

    let trace: Vec<(usize, f64)> = set.error_trace.iter().enumerate().map(|(k, e)| (k + 1, *e)).collect();
    let fit = fit_loglog(&trace, args.fit_from, args.m_max);
    let report = ConvergenceReport {
        moments: args.moments.clone(),
        m_max: args.m_max,
        fit_from: args.fit_from,
        trace,
        slope: fit.map(|f| f.0),
        slope_stderr: fit.map(|f| f.1),
    };
    let mut text = serde_json::to_string(&report)?;
    text.push('\n');
    emit(&args.out, text.as_bytes())?;
    match fit {
        Some((slope, se)) => eprintln!("log-log slope {slope:.4} ± {se:.4} over M ∈ [{}, {}]", args.fit_from, args.m_max),
        None => eprintln!("too few positive error values to fit a slope"),
    }
    if let Some(path) = manifest_path(&args.out, &args.manifest) {
        manifest.write(&path)?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CrfError>()) {
        Some(CrfError::Parse(_)) | Some(CrfError::Io(_)) => 1,
        Some(CrfError::InvalidInput(_)) | Some(CrfError::ShapeMismatch(_)) => 2,
        Some(CrfError::Capacity { .. }) => 3,
        None if err.chain().any(|e| e.downcast_ref::<io::Error>().is_some()) => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Experiment(a) => match cmd_experiment(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: every run failed");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
