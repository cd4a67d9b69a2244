//! Command-line surface: dataset synthesis, pooling, Gram building,
//! training, evaluation, and numerical self-checks.
//!
//! Reports go to stdout as CSV; logs and errors go to stderr. Exit
//! codes: 0 ok, 1 self-check or verification failure, 2 usage, 3 data
//! error, 4 model/shape error.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use krp_core::classify::{evaluate, predict, train, Metric, Prediction};
use krp_core::geometry::{tangency_error, KStiefel, RcgConfig};
use krp_core::grasskernel::{
    gram_preimage, gram_subspace, similarity_row, ClassificationGram, CrossBandwidth, Descriptor,
    DescriptorKind,
};
use krp_core::kernel;
use krp_core::krpfs::{
    kpca_oracle, krpfs_eucgrad, krpfs_fit, krpfs_objective, subspace_order_satisfaction,
    KrpfsParams,
};
use krp_core::linrank::{
    avg_pool, linear_order_satisfaction, rp_fit, rp_objective, RankParams,
};
use krp_core::preimage::{
    self, kernel_order_satisfaction, preimage_fit, preimage_grad, PreimageParams, Variant,
};
use krp_core::rng::SeqRng;
use krp_core::seq::{synth_sequence, Dynamics, Sequence, SynthSpec};

use crate::io::{
    load_manifest, load_sequence, read_descriptor, read_gram_csv, read_model, save_sequence,
    write_descriptor, write_gram_csv, write_model, Manifest, StoredModel,
};
use crate::{Error, Result};

/// Pools temporal feature sequences into compact descriptors and
/// classifies them with kernels over the descriptors.
#[derive(Debug, Parser)]
#[command(name = "krp", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of labeled sequences.
    Synth(SynthArgs),
    /// Pool every sequence of a manifest into descriptor files.
    Pool(PoolArgs),
    /// Build a classification Gram matrix over descriptors.
    Gram(GramArgs),
    /// Train a one-vs-rest kernel ridge model on a Gram matrix.
    Train(TrainArgs),
    /// Evaluate a trained model on a test manifest.
    Eval(EvalArgs),
    /// Run the numerical self-test suite.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DynamicsArg {
    MonotoneLine,
    Spiral,
    FrequencyCoded,
}

impl From<DynamicsArg> for Dynamics {
    fn from(d: DynamicsArg) -> Dynamics {
        match d {
            DynamicsArg::MonotoneLine => Dynamics::MonotoneLine,
            DynamicsArg::Spiral => Dynamics::Spiral,
            DynamicsArg::FrequencyCoded => Dynamics::FrequencyCoded,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of classes (at least 2).
    #[arg(long)]
    pub classes: usize,
    /// Sequences per class.
    #[arg(long = "per-class")]
    pub per_class: usize,
    /// Frames per sequence.
    #[arg(long)]
    pub n: usize,
    /// Feature dimension.
    #[arg(long)]
    pub d: usize,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Spiral)]
    pub dynamics: DynamicsArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (sequences plus manifest.csv).
    #[arg(long)]
    pub out: PathBuf,
}

/// `auto` or an explicit positive value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Value(f64),
}

impl FromStr for AutoOr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got {s:?}"))?;
        if !(v > 0.0) {
            return Err(format!("expected a positive value, got {v}"));
        }
        Ok(AutoOr::Value(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Avg,
    Rp,
    Bkrp,
    Ibkrp,
    Krpfs,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Manifest of sequences to pool.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Directory for the descriptor files (mirrors the manifest tree).
    #[arg(long)]
    pub out: PathBuf,
    /// Ranking margin.
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    /// Ranking weight.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Slack weight C (effective hinge weight is min(C, lambda)).
    #[arg(long = "slack-c", default_value_t = 1.0)]
    pub slack_c: f64,
    /// Kernel bandwidth: `auto` (per-sequence feature std) or a value.
    #[arg(long, default_value = "auto")]
    pub sigma: AutoOr,
    /// Subspace dimension (krpfs only).
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Iteration budget (conjugate gradient or descent steps).
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Gram diagonal jitter (krpfs only).
    #[arg(long, default_value_t = kernel::DEFAULT_JITTER)]
    pub jitter: f64,
    /// L2-normalize each frame before pooling.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
    /// Try mean/first/last starts and keep the best (bkrp/ibkrp).
    #[arg(long = "multi-start", default_value_t = false)]
    pub multi_start: bool,
    /// Weight hinges by raw lambda instead of min(C, lambda).
    #[arg(long = "raw-lambda-weight", default_value_t = false)]
    pub raw_lambda_weight: bool,
    /// Verify descriptor invariants after fitting; exit 1 on violation.
    #[arg(long, default_value_t = false)]
    pub verify: bool,
    /// Write per-sequence objective traces (krpfs) into this directory.
    #[arg(long = "trace-dir")]
    pub trace_dir: Option<PathBuf>,
    /// Worker threads (default: KRP_THREADS or available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    /// Manifest naming the pooled sequences (fixes the Gram order).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding the descriptor files.
    #[arg(long = "desc-dir")]
    pub desc_dir: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Projection kernel scale for subspace descriptors (`auto` = 1/p).
    #[arg(long, default_value = "auto")]
    pub nu: AutoOr,
    /// RBF bandwidth for pre-image descriptors (`auto` = pooled std of
    /// the descriptor entries).
    #[arg(long = "sigma-c", default_value = "auto")]
    pub sigma_c: AutoOr,
    /// Fixed cross-sequence bandwidth override for subspace similarity
    /// (default: geometric mean of the per-sequence bandwidths).
    #[arg(long = "global-sigma")]
    pub global_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Gram CSV produced by `krp gram`.
    #[arg(long)]
    pub gram: PathBuf,
    /// Optional second Gram averaged entrywise with the first
    /// (two-stream score fusion).
    #[arg(long)]
    pub gram2: Option<PathBuf>,
    /// Manifest aligned with the Gram rows (provides labels).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding the descriptor files (recorded in the model).
    #[arg(long = "desc-dir")]
    pub desc_dir: PathBuf,
    /// Ridge parameter: a value or `cv` for a small grid search.
    #[arg(long, default_value = "1e-3")]
    pub reg: String,
    /// Output model path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "auto")]
    pub nu: AutoOr,
    #[arg(long = "sigma-c", default_value = "auto")]
    pub sigma_c: AutoOr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Accuracy,
    Map,
    Both,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory the model's training descriptor paths resolve against.
    #[arg(long = "train-desc-dir")]
    pub train_desc_dir: PathBuf,
    /// Manifest of the evaluation sequences.
    #[arg(long = "test-manifest")]
    pub test_manifest: PathBuf,
    /// Directory holding the evaluation descriptors.
    #[arg(long = "test-desc-dir")]
    pub test_desc_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Both)]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs a parsed command; the returned code is the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args).map(|()| 0),
        Command::Pool(args) => cmd_pool(&args),
        Command::Gram(args) => cmd_gram(&args).map(|()| 0),
        Command::Train(args) => cmd_train(&args).map(|()| 0),
        Command::Eval(args) => cmd_eval(&args).map(|()| 0),
        Command::Check(args) => Ok(if cmd_check(&args)? { 0 } else { 1 }),
    }
}

// ---------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.classes < 2 {
        return Err(Error::usage("--classes must be at least 2"));
    }
    let spec = SynthSpec {
        classes: args.classes,
        sequences_per_class: args.per_class,
        n: args.n,
        d: args.d,
        noise: args.noise,
        dynamics: args.dynamics.into(),
    };
    spec.validate().map_err(|e| Error::usage(e.to_string()))?;

    let mut manifest = String::new();
    for class in 0..spec.classes {
        for index in 0..spec.sequences_per_class {
            let x = synth_sequence(&spec, args.seed, class, index)?;
            let name = format!("c{class}_s{index}.csv");
            save_sequence(&args.out.join(&name), &x)?;
            manifest.push_str(&format!("{name},c{class}\n"));
        }
    }
    crate::io::write_text(&args.out.join("manifest.csv"), &manifest)?;
    eprintln!(
        "wrote {} sequences and manifest.csv to {}",
        spec.classes * spec.sequences_per_class,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// pool
// ---------------------------------------------------------------------

fn descriptor_rel_path(rel: &str) -> PathBuf {
    PathBuf::from(rel).with_extension("krpd")
}

struct PoolOutcome {
    rel_path: String,
    sigma: f64,
    iterations: u64,
    objective: f64,
    order_satisfaction: f64,
    feasibility: Option<f64>,
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("KRP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .filter(|&n| n > 0)
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn pool_one(args: &PoolArgs, manifest: &Manifest, index: usize) -> Result<PoolOutcome> {
    let entry = &manifest.entries[index];
    let path = manifest.sequence_path(entry);
    let mut x = load_sequence(&path)?;
    if args.normalize {
        x = x.l2_normalized();
    }
    let with_file = |e: krp_core::Error| -> Error {
        match e {
            krp_core::Error::DegenerateSequence(msg) => Error::Data(format!(
                "{}: degenerate sequence: {msg}",
                path.display()
            )),
            other => Error::Core(other),
        }
    };
    let sigma = match args.sigma {
        AutoOr::Value(v) => Some(v),
        AutoOr::Auto => None,
    };

    let out_path = args.out.join(descriptor_rel_path(&entry.rel_path));
    let (descriptor, sigma_used, iterations, objective, order, trace): (
        Descriptor,
        f64,
        u64,
        f64,
        f64,
        Option<Vec<f64>>,
    ) = match args.method {
        MethodArg::Avg => {
            let d = avg_pool(&x);
            let sig = sigma
                .map(Ok)
                .unwrap_or_else(|| kernel::bandwidth(&x))
                .map_err(with_file)?;
            let order = kernel_order_satisfaction(&d.z, &x, sig, args.eta)?;
            (Descriptor::Preimage(d), sig, 0, 0.0, order, None)
        }
        MethodArg::Rp => {
            let prm = RankParams {
                eta: args.eta,
                lambda: args.lambda,
                max_iters: args.iters.max(1),
                ..RankParams::default()
            };
            let d = rp_fit(&x, &prm)?;
            let order = linear_order_satisfaction(&d.z, &x, args.eta)?;
            let (it, obj) = (d.meta.iterations, d.meta.final_objective);
            (Descriptor::Preimage(d), 0.0, it, obj, order, None)
        }
        MethodArg::Bkrp | MethodArg::Ibkrp => {
            let prm = PreimageParams {
                eta: args.eta,
                lambda: args.lambda,
                slack_c: args.slack_c,
                sigma,
                max_iters: args.iters.max(1) * 5,
                multi_start: args.multi_start,
                raw_lambda_weight: args.raw_lambda_weight,
                ..PreimageParams::default()
            };
            let variant = if args.method == MethodArg::Bkrp {
                Variant::Bkrp
            } else {
                Variant::Ibkrp
            };
            let d = preimage_fit(&x, &prm, variant).map_err(with_file)?;
            let order = kernel_order_satisfaction(&d.z, &x, d.meta.sigma, args.eta)?;
            let (sig, it, obj) = (d.meta.sigma, d.meta.iterations, d.meta.final_objective);
            (Descriptor::Preimage(d), sig, it, obj, order, None)
        }
        MethodArg::Krpfs => {
            if args.p > x.frame_count() {
                return Err(Error::Data(format!(
                    "{}: subspace dimension {} exceeds frame count {}",
                    path.display(),
                    args.p,
                    x.frame_count()
                )));
            }
            let prm = KrpfsParams {
                p: args.p,
                eta: args.eta,
                lambda: args.lambda,
                slack_c: args.slack_c,
                jitter: args.jitter,
                sigma,
                raw_lambda_weight: args.raw_lambda_weight,
                rcg: RcgConfig {
                    max_iters: args.iters.max(1),
                    ..RcgConfig::default()
                },
            };
            let (d, trace) = krpfs_fit_with_trace(&x, &prm).map_err(with_file)?;
            let order = subspace_order_satisfaction(&d, args.eta)?;
            let (sig, obj) = (d.sigma, d.final_objective);
            let iters = trace.len().saturating_sub(1) as u64;
            (Descriptor::Subspace(d), sig, iters, obj, order, Some(trace))
        }
    };

    let feasibility = if args.verify {
        match &descriptor {
            Descriptor::Subspace(d) => Some(d.feasibility_error()?),
            Descriptor::Preimage(d) => {
                // Vector descriptors have no manifold constraint; verify
                // finiteness instead.
                if d.z.iter().all(|v| v.is_finite()) {
                    Some(0.0)
                } else {
                    Some(f64::INFINITY)
                }
            }
        }
    } else {
        None
    };

    write_descriptor(&out_path, &descriptor)?;
    if let (Some(dir), Some(trace)) = (&args.trace_dir, &trace) {
        let mut out = String::from("iteration,objective\n");
        for (i, f) in trace.iter().enumerate() {
            out.push_str(&format!("{i},{f}\n"));
        }
        crate::io::write_text(&dir.join(descriptor_rel_path(&entry.rel_path).with_extension("trace.csv")), &out)?;
    }

    Ok(PoolOutcome {
        rel_path: entry.rel_path.clone(),
        sigma: sigma_used,
        iterations,
        objective,
        order_satisfaction: order,
        feasibility,
    })
}

/// `krpfs_fit` plus the solver's objective trace (for `--trace-dir`).
fn krpfs_fit_with_trace(
    x: &Sequence,
    prm: &KrpfsParams,
) -> krp_core::Result<(krp_core::krpfs::SubspaceDescriptor, Vec<f64>)> {
    let sigma = match prm.sigma {
        Some(s) => s,
        None => kernel::bandwidth(x)?,
    };
    let kv = kernel::gram(x, sigma, prm.jitter)?.into_values();
    let (a0, _) = kpca_oracle(&kv, prm.p)?;
    let manifold = KStiefel::new(kv.clone())?;
    let p0 = manifold.korthonormalize(&a0)?;
    let result = manifold.rcg_minimize(
        |a| krpfs_objective(a, &kv, prm).expect("driver keeps shapes fixed"),
        |a| krpfs_eucgrad(a, &kv, prm).expect("driver keeps shapes fixed"),
        &p0,
        &prm.rcg,
    )?;
    let trace = result.trace.clone();
    let final_objective = result.final_objective();
    Ok((
        krp_core::krpfs::SubspaceDescriptor {
            a: result.point.into_coeffs(),
            frames: x.clone(),
            sigma,
            jitter: prm.jitter,
            p: prm.p,
            final_objective,
        },
        trace,
    ))
}

fn cmd_pool(args: &PoolArgs) -> Result<i32> {
    let manifest = load_manifest(&args.manifest)?;
    let m = manifest.entries.len();
    let workers = thread_count(args.threads).min(m.max(1));

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<PoolOutcome>>>> = Mutex::new((0..m).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= m {
                    break;
                }
                let outcome = pool_one(args, &manifest, i);
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    println!("file,method,sigma,iterations,objective,order_satisfaction");
    let method = match args.method {
        MethodArg::Avg => "avg",
        MethodArg::Rp => "rp",
        MethodArg::Bkrp => "bkrp",
        MethodArg::Ibkrp => "ibkrp",
        MethodArg::Krpfs => "krpfs",
    };
    let mut verify_failed = false;
    for slot in results.into_inner().unwrap() {
        let outcome = slot.expect("every index processed")?;
        println!(
            "{},{},{},{},{},{:.6}",
            outcome.rel_path,
            method,
            outcome.sigma,
            outcome.iterations,
            outcome.objective,
            outcome.order_satisfaction
        );
        if let Some(feas) = outcome.feasibility {
            if !(feas <= krp_core::geometry::FEASIBILITY_TOL) {
                eprintln!(
                    "verify: {} violates the descriptor invariant (error {feas:.3e})",
                    outcome.rel_path
                );
                verify_failed = true;
            }
        }
    }
    Ok(if verify_failed { 1 } else { 0 })
}

// ---------------------------------------------------------------------
// gram
// ---------------------------------------------------------------------

fn load_descriptors(manifest: &Manifest, desc_dir: &Path) -> Result<Vec<Descriptor>> {
    manifest
        .entries
        .iter()
        .map(|e| read_descriptor(&desc_dir.join(descriptor_rel_path(&e.rel_path))))
        .collect()
}

fn split_kinds(descs: &[Descriptor]) -> Result<DescriptorKind> {
    let Some(first) = descs.first() else {
        return Err(Error::format("no descriptors found"));
    };
    let kind = first.kind();
    if descs.iter().any(|d| d.kind() != kind) {
        return Err(Error::Core(krp_core::Error::Kind(
            "descriptor directory mixes pre-image and subspace kinds".into(),
        )));
    }
    Ok(kind)
}

/// Pooled standard deviation of all pre-image descriptor entries; the
/// `auto` rule for the cross-descriptor RBF bandwidth.
fn auto_sigma_c(descs: &[Descriptor]) -> f64 {
    let entries: Vec<f64> = descs
        .iter()
        .filter_map(|d| match d {
            Descriptor::Preimage(p) => Some(p.z.iter().copied()),
            Descriptor::Subspace(_) => None,
        })
        .flatten()
        .collect();
    if entries.len() < 2 {
        return 1.0;
    }
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    let var = entries.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (entries.len() - 1) as f64;
    var.sqrt().max(1e-3)
}

fn resolve_hyper(
    kind: DescriptorKind,
    descs: &[Descriptor],
    nu: AutoOr,
    sigma_c: AutoOr,
) -> f64 {
    match kind {
        DescriptorKind::Subspace => match nu {
            AutoOr::Value(v) => v,
            AutoOr::Auto => {
                let p = descs
                    .iter()
                    .find_map(|d| match d {
                        Descriptor::Subspace(s) => Some(s.p),
                        _ => None,
                    })
                    .unwrap_or(1);
                1.0 / p as f64
            }
        },
        DescriptorKind::Preimage => match sigma_c {
            AutoOr::Value(v) => v,
            AutoOr::Auto => auto_sigma_c(descs),
        },
    }
}

fn build_gram(
    descs: &[Descriptor],
    kind: DescriptorKind,
    hyper: f64,
    global_sigma: Option<f64>,
) -> Result<ClassificationGram> {
    match kind {
        DescriptorKind::Subspace => {
            let subs: Vec<_> = descs
                .iter()
                .map(|d| match d {
                    Descriptor::Subspace(s) => s.clone(),
                    Descriptor::Preimage(_) => unreachable!("kind checked"),
                })
                .collect();
            let bw = match global_sigma {
                Some(s) => CrossBandwidth::Global(s),
                None => CrossBandwidth::PerPairGeometric,
            };
            Ok(gram_subspace(&subs, hyper, bw)?)
        }
        DescriptorKind::Preimage => {
            let pres: Vec<_> = descs
                .iter()
                .map(|d| match d {
                    Descriptor::Preimage(p) => p.clone(),
                    Descriptor::Subspace(_) => unreachable!("kind checked"),
                })
                .collect();
            Ok(gram_preimage(&pres, hyper)?)
        }
    }
}

fn cmd_gram(args: &GramArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let descs = load_descriptors(&manifest, &args.desc_dir)?;
    let kind = split_kinds(&descs)?;
    let hyper = resolve_hyper(kind, &descs, args.nu, args.sigma_c);
    let gram = build_gram(&descs, kind, hyper, args.global_sigma)?;
    write_gram_csv(&args.out, &gram)?;
    eprintln!(
        "wrote {}x{} {} Gram (hyper {hyper}) to {}",
        gram.m(),
        gram.m(),
        match kind {
            DescriptorKind::Subspace => "subspace",
            DescriptorKind::Preimage => "pre-image",
        },
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

/// Deterministic 5-fold cross-validation over a small ridge grid.
fn cross_validate_reg(gram: &ClassificationGram, labels: &[usize]) -> Result<f64> {
    let grid = [1e-4, 1e-3, 1e-2, 1e-1];
    let m = gram.m();
    let folds = 5.min(m);
    let class_count = labels.iter().max().map_or(0, |c| c + 1);
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &reg in &grid {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let train_idx: Vec<usize> = (0..m).filter(|i| i % folds != fold).collect();
            let test_idx: Vec<usize> = (0..m).filter(|i| i % folds == fold).collect();
            let fold_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            if (0..class_count).any(|c| !fold_labels.contains(&c)) {
                continue;
            }
            let sub = DMatrix::from_fn(train_idx.len(), train_idx.len(), |a, b| {
                gram.values()[(train_idx[a], train_idx[b])]
            });
            let subgram = ClassificationGram::from_values(sub, gram.hyper(), gram.kind())?;
            let model = train(&subgram, &fold_labels, reg)?;
            for &t in &test_idx {
                let row: Vec<f64> = train_idx.iter().map(|&i| gram.values()[(t, i)]).collect();
                let (pred, _) = predict(&model, &row)?;
                if pred == labels[t] {
                    correct += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            continue;
        }
        let acc = correct as f64 / total as f64;
        if acc > best.0 {
            best = (acc, reg);
        }
    }
    eprintln!("cross-validated ridge parameter: {}", best.1);
    Ok(best.1)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let descs = load_descriptors(&manifest, &args.desc_dir)?;
    let kind = split_kinds(&descs)?;
    let hyper = resolve_hyper(kind, &descs, args.nu, args.sigma_c);

    let mut gram = read_gram_csv(&args.gram, hyper, kind)?;
    if let Some(second) = &args.gram2 {
        let other = read_gram_csv(second, hyper, kind)?;
        if other.m() != gram.m() {
            return Err(Error::Core(krp_core::Error::Shape(format!(
                "fusion Grams differ in size: {} vs {}",
                gram.m(),
                other.m()
            ))));
        }
        let fused = (gram.values() + other.values()) * 0.5;
        gram = ClassificationGram::from_values(fused, hyper, kind)?;
    }
    if gram.m() != manifest.entries.len() {
        return Err(Error::Core(krp_core::Error::Shape(format!(
            "Gram has {} rows but the manifest lists {} sequences",
            gram.m(),
            manifest.entries.len()
        ))));
    }

    let labels: Vec<usize> = manifest.entries.iter().map(|e| e.label).collect();
    let reg = if args.reg.eq_ignore_ascii_case("cv") {
        cross_validate_reg(&gram, &labels)?
    } else {
        let v: f64 = args
            .reg
            .parse()
            .map_err(|_| Error::usage(format!("--reg expects a number or `cv`, got {:?}", args.reg)))?;
        if !(v > 0.0) {
            return Err(Error::usage("--reg must be positive"));
        }
        v
    };

    let model = train(&gram, &labels, reg)?;
    let stored = StoredModel {
        model,
        kind,
        hyper,
        class_names: manifest.class_names.clone(),
        train_refs: manifest
            .entries
            .iter()
            .map(|e| descriptor_rel_path(&e.rel_path).to_string_lossy().into_owned())
            .collect(),
    };
    write_model(&args.out, &stored)?;
    eprintln!(
        "trained on {} descriptors ({} classes), reg {reg}, model at {}",
        stored.train_refs.len(),
        stored.class_names.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let stored = read_model(&args.model)?;
    let train_descs: Vec<Descriptor> = stored
        .train_refs
        .iter()
        .map(|r| read_descriptor(&args.train_desc_dir.join(r)))
        .collect::<Result<_>>()?;
    if let Some(bad) = train_descs.iter().find(|d| d.kind() != stored.kind) {
        return Err(Error::Core(krp_core::Error::Kind(format!(
            "model kind and training descriptor kind differ ({:?} vs {:?})",
            stored.kind,
            bad.kind()
        ))));
    }

    let manifest = load_manifest(&args.test_manifest)?;
    let test_descs = load_descriptors(&manifest, &args.test_desc_dir)?;
    let truth: Vec<usize> = manifest
        .entries
        .iter()
        .map(|e| {
            let name = &manifest.class_names[e.label];
            stored
                .class_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    Error::Core(krp_core::Error::Shape(format!(
                        "test label {name:?} unknown to the model"
                    )))
                })
        })
        .collect::<Result<_>>()?;

    let mut predictions = Vec::new();
    for desc in &test_descs {
        let row = similarity_row(desc, &train_descs, stored.hyper)?;
        let (label, scores) = predict(&stored.model, &row)?;
        predictions.push(Prediction { label, scores });
    }

    println!("metric,value");
    if matches!(args.metric, MetricArg::Accuracy | MetricArg::Both) {
        let acc = evaluate(&predictions, &truth, Metric::Accuracy)?;
        println!("accuracy,{acc:.6}");
    }
    if matches!(args.metric, MetricArg::Map | MetricArg::Both) {
        let map = evaluate(&predictions, &truth, Metric::MeanAveragePrecision)?;
        println!("map,{map:.6}");
    }
    Ok(())
}

// ---------------------------------------------------------------------
// check
// ---------------------------------------------------------------------

struct CheckReport {
    failures: usize,
}

impl CheckReport {
    fn record(&mut self, name: &str, pass: bool, value: f64) {
        println!(
            "check,{name},{},{value:.1e}",
            if pass { "pass" } else { "fail" }
        );
        if !pass {
            self.failures += 1;
        }
    }
}

fn random_sequence(rng: &mut SeqRng, n: usize, d: usize) -> Sequence {
    Sequence::from_frames(DMatrix::from_fn(n, d, |_, _| rng.next_range(-2.0, 2.0))).unwrap()
}

/// Numerical self-test suite; prints one CSV line per invariant and
/// returns whether everything passed.
fn cmd_check(args: &CheckArgs) -> Result<bool> {
    let mut rng = SeqRng::new(args.seed);
    let mut report = CheckReport { failures: 0 };

    // Analytic kernel value.
    let k = kernel::rbf(&[1.0, 2.0], &[3.0, 1.0], 1.0)?;
    report.record("rbf_analytic", (k - (-2.5f64).exp()).abs() <= 1e-15, (k - (-2.5f64).exp()).abs());

    // Objective brute-force agreement.
    let mut worst_obj = 0.0f64;
    for trial in 0..20 {
        let n = 3 + trial % 5;
        let d = 1 + trial % 3;
        let x = random_sequence(&mut rng, n, d);
        let sigma = rng.next_range(0.5, 1.5);
        let z = DVector::from_fn(d, |_, _| rng.next_range(-1.5, 1.5));
        let eta = 0.01;
        let lambda = rng.next_range(0.3, 2.0);

        let rp = rp_objective(&z, &x, &RankParams { eta, lambda, ..RankParams::default() })?;
        let pre = PreimageParams {
            eta,
            lambda,
            sigma: Some(sigma),
            ..PreimageParams::default()
        };
        let bk = preimage::bkrp_objective(&z, &x, &pre)?;
        let ib = preimage::ibkrp_objective(&z, &x, &pre)?;

        // Inline oracle.
        let ks: Vec<f64> = (0..n)
            .map(|i| {
                let xi: Vec<f64> = x.frame(i).iter().copied().collect();
                let sq: f64 = xi.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut hinge_k = 0.0;
        let mut hinge_lin = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                hinge_k += (eta + ks[i] - ks[j]).max(0.0);
                let vi: f64 = (0..d).map(|c| z[c] * x.frames()[(i, c)]).sum();
                let vj: f64 = (0..d).map(|c| z[c] * x.frames()[(j, c)]).sum();
                hinge_lin += (eta + vi - vj).max(0.0);
            }
        }
        let znorm = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
        let mut data = 0.0;
        for i in 0..n {
            for c in 0..d {
                let diff = x.frames()[(i, c)] - z[c];
                data += diff * diff;
            }
        }
        worst_obj = worst_obj
            .max((rp - (znorm + lambda * hinge_lin)).abs())
            .max((bk - (znorm + lambda * hinge_k)).abs())
            .max((ib - (0.5 * data + 1.0f64.min(lambda) * hinge_k)).abs());
    }
    report.record("objective_oracles", worst_obj <= 1e-12, worst_obj);

    // Finite-difference gradient agreement (the fault-injection target).
    let mut worst_fd = 0.0f64;
    let h = 1e-6;
    let mut checked = 0;
    while checked < 20 {
        let n = 4 + (rng.next_u64() % 3) as usize;
        let d = 1 + (rng.next_u64() % 3) as usize;
        let x = random_sequence(&mut rng, n, d);
        let prm = PreimageParams {
            sigma: Some(rng.next_range(0.5, 1.5)),
            ..PreimageParams::default()
        };
        let z = DVector::from_fn(d, |_, _| rng.next_range(-1.5, 1.5));
        let variant = if checked % 2 == 0 { Variant::Bkrp } else { Variant::Ibkrp };
        let sigma = prm.sigma.unwrap();
        let ks: Vec<f64> = (0..n)
            .map(|i| {
                let xi: Vec<f64> = x.frame(i).iter().copied().collect();
                let sq: f64 = xi.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let kink_free = (0..n).all(|i| (i + 1..n).all(|j| (prm.eta + ks[i] - ks[j]).abs() > 1e-3));
        if !kink_free {
            continue;
        }
        let analytic = preimage_grad(&z, &x, &prm, variant)?;
        let mut fd = DVector::zeros(d);
        for c in 0..d {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            fd[c] = (preimage::objective(&zp, &x, &prm, variant)?
                - preimage::objective(&zm, &x, &prm, variant)?)
                / (2.0 * h);
        }
        worst_fd = worst_fd.max((&analytic - &fd).norm() / fd.norm().max(1e-12));
        checked += 1;
    }

    let mut checked = 0;
    while checked < 10 {
        let n = 5;
        let p = 1 + (rng.next_u64() % 2) as usize;
        let x = random_sequence(&mut rng, n, 2);
        let kv = kernel::gram(&x, 0.9, kernel::DEFAULT_JITTER)?.into_values();
        let prm = KrpfsParams { p, ..KrpfsParams::default() };
        let a = DMatrix::from_fn(n, p, |_, _| rng.next_range(-0.8, 0.8));
        let analytic = krpfs_eucgrad(&a, &kv, &prm)?;
        let mut fd = DMatrix::zeros(n, p);
        for r in 0..n {
            for c in 0..p {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[(r, c)] += h;
                am[(r, c)] -= h;
                fd[(r, c)] =
                    (krpfs_objective(&ap, &kv, &prm)? - krpfs_objective(&am, &kv, &prm)?) / (2.0 * h);
            }
        }
        // Skip kink-adjacent samples, mirroring the pre-image check.
        let rel = (&analytic - &fd).norm() / fd.norm().max(1e-12);
        if rel > 1e-3 {
            let b = &kv * &a;
            let s3 = a.transpose() * &b;
            let es: Vec<f64> = (0..n)
                .map(|i| (b.row(i) * &s3 * b.row(i).transpose())[(0, 0)])
                .collect();
            let kinky = (0..n).any(|i| (i + 1..n).any(|j| (es[i] + prm.eta - es[j]).abs() <= 1e-3));
            if kinky {
                continue;
            }
        }
        worst_fd = worst_fd.max(rel);
        checked += 1;
    }
    report.record("gradient_finite_difference", worst_fd <= 1e-5, worst_fd);

    // Manifold invariants.
    let x = random_sequence(&mut rng, 10, 2);
    let kv = kernel::gram(&x, kernel::bandwidth(&x)?, kernel::DEFAULT_JITTER)?.into_values();
    let manifold = KStiefel::new(kv.clone())?;
    let point = manifold.korthonormalize(&DMatrix::from_fn(10, 2, |_, _| rng.next_range(-1.0, 1.0)))?;
    let feas = manifold.feasibility_error(point.coeffs());
    report.record("korthonormal_feasibility", feas <= 1e-10, feas);

    let grad = manifold.riemannian_grad(&point, &DMatrix::from_fn(10, 2, |_, _| rng.next_normal()))?;
    let skew = tangency_error(manifold.kernel(), point.coeffs(), grad.matrix());
    report.record("riemannian_grad_tangency", skew <= 1e-10, skew);

    let xi = manifold.tangent_project(&point, &DMatrix::from_fn(10, 2, |_, _| rng.next_normal()))?;
    let ts = [1e-2, 1e-3, 1e-4, 1e-5];
    let devs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let r = manifold.retract(&point, &xi, t).unwrap();
            (r.coeffs() - (point.coeffs() + t * xi.matrix())).norm().max(1e-300)
        })
        .collect();
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = devs.iter().map(|v| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / 4.0;
    let ym = ys.iter().sum::<f64>() / 4.0;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (a - xm) * (b - ym))
        .sum::<f64>()
        / xs.iter().map(|a| (a - xm) * (a - xm)).sum::<f64>();
    report.record("retraction_order", slope >= 1.9, slope);

    // Kernel-PCA reduction through the full fit.
    let y = random_sequence(&mut rng, 14, 3);
    let prm = KrpfsParams { p: 2, lambda: 0.0, ..KrpfsParams::default() };
    let desc = krpfs_fit(&y, &prm)?;
    let ky = kernel::gram(&y, desc.sigma, prm.jitter)?.into_values();
    let (_, optimum) = kpca_oracle(&ky, 2)?;
    let gap = (desc.final_objective - optimum).abs() / optimum.abs();
    report.record("kernel_pca_reduction", gap <= 1e-4, gap);

    // Rayleigh optimum recovery.
    let b = DMatrix::from_fn(8, 8, |_, _| rng.next_range(-1.0, 1.0));
    let kmat = &b * b.transpose() / 8.0 + DMatrix::identity(8, 8) * 0.5;
    let manifold = KStiefel::new(kmat.clone())?;
    let k2 = &kmat * &kmat;
    let p0 = manifold.korthonormalize(&DMatrix::from_fn(8, 2, |_, _| rng.next_range(-1.0, 1.0)))?;
    let result = manifold.rcg_minimize(
        |a| -0.5 * (a.transpose() * &k2 * a).trace(),
        |a| -(&k2 * a),
        &p0,
        &RcgConfig {
            max_iters: 2000,
            grad_tol: 1e-12,
            ..RcgConfig::default()
        },
    )?;
    let mut eigs: Vec<f64> = kmat.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let optimum = -0.5 * (eigs[0] + eigs[1]);
    let gap = (result.final_objective() - optimum).abs() / optimum.abs();
    report.record("rayleigh_convergence", gap <= 1e-6, gap);

    eprintln!(
        "self-check: {} failure(s)",
        report.failures
    );
    Ok(report.failures == 0)
}
