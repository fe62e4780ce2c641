//! Command-line front end for the `mmpo` crate.
//!
//! Every subcommand resolves an [`ExperimentConfig`] (defaults, preset, file,
//! flags), echoes it to `config.json` in the output directory and writes its
//! artifacts there with write-then-rename. Exit codes: 0 success, 1 runtime
//! failure, 2 invalid invocation or configuration.

pub mod config;
pub mod io;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use mmpo::bt_target::{curve_to_csv, estimate_margins, fit_similarity_margin_map, preference_curve};
use mmpo::eval::{
    best_of_n_csv, best_of_n_curve, calibration_from_differences, differences_with_workers, reliability_csv,
    report_from_differences,
};
use mmpo::eval::{Candidate, CandidatePool};
use mmpo::feedback_data::{
    filter_by_margin, generate_synthetic_bt, ingest_binary_records, ingest_records, length_filter, quartile_sample,
    DataError, Orientation, SplitFractions,
};
use mmpo::scorers::{CandidateSets, Checkpoint, Policy, ReferencePolicy};
use mmpo::trainer::{margin_trajectory, metrics_jsonl, train, train_kto, trajectory_csv};
use mmpo::{DatasetSplit, LossKind, Model, PreferencePair, ResponseRef, ScorerKind};

pub use config::ExperimentConfig;

/// Parses a kebab/snake-case enum through its serde representation.
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn loss_kind(s: &str) -> Result<LossKind, String> {
    serde_enum(&s.replace('-', "_"))
}

fn scorer_kind(s: &str) -> Result<ScorerKind, String> {
    serde_enum(&s.replace('_', "-"))
}

fn orientation(s: &str) -> Result<Orientation, String> {
    serde_enum(&s.replace('_', "-"))
}

#[derive(Debug, Parser)]
#[command(name = "mmpo", version, about = "Margin-matched preference optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named hyperparameter preset (e.g. judge-7b, reward-2b).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $MMPO_OUTPUT_DIR or ./mmpo-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic Bradley–Terry corpus with known rewards.
    Synth(SynthArgs),
    /// Train a scorer and write a checkpoint.
    Train(TrainArgs),
    /// Accuracy, calibration and category report for a checkpoint.
    Eval(EvalArgs),
    /// Reliability diagram and ECE for a checkpoint.
    Calibrate(EvalArgs),
    /// Best-of-n selection curve over candidate pools.
    Bestof(BestofArgs),
    /// Margin filtering and quartile-balanced subsampling.
    Sample(SampleArgs),
    /// Fit an embedding-similarity → margin map and apply it.
    EstimateMargins(EstimateArgs),
    /// Tabulate the soft preference target σ(γ·m).
    Curve(CurveArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    prompts: Option<usize>,
    #[arg(long)]
    responses: Option<usize>,
    #[arg(long)]
    true_gamma: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    feature_noise: Option<f64>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    pairs_per_prompt: Option<usize>,
    /// Train, validation and test fractions.
    #[arg(long, num_args = 3, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Held-out file whose prompts are registered with policy scorers.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_parser = loss_kind)]
    loss: Option<LossKind>,
    #[arg(long, value_parser = scorer_kind)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = orientation)]
    orientation: Option<Orientation>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Pairs to evaluate (default: data.test from the config).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = orientation)]
    orientation: Option<Orientation>,
    #[arg(long)]
    bins: Option<usize>,
    /// Overrides the β stored in the checkpoint.
    #[arg(long)]
    beta: Option<f64>,
    /// Threads used to score pairs; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct BestofArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSONL of candidate pools.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long = "n", value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    min_margin: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long, value_parser = orientation)]
    orientation: Option<Orientation>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Judge-scored pairs with embeddings used to fit the map.
    #[arg(long)]
    fit: PathBuf,
    /// Pairs with embeddings whose margins are estimated.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = orientation)]
    orientation: Option<Orientation>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, alias = "mmin")]
    m_min: Option<f64>,
    #[arg(long, alias = "mmax")]
    m_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

/// Failure split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `mmpo --help` for usage");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a, false),
        Command::Calibrate(a) => eval_cmd(a, true),
        Command::Bestof(a) => bestof(a),
        Command::Sample(a) => sample(a),
        Command::EstimateMargins(a) => estimate(a),
        Command::Curve(a) => curve(a),
    }
}

fn resolve(common: &Common, apply: impl FnOnce(&mut ExperimentConfig)) -> Outcome<(ExperimentConfig, PathBuf)> {
    let mut cfg = config::load(common.config.as_deref(), common.preset.as_deref()).map_err(usage)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    apply(&mut cfg);
    cfg.validate().map_err(usage)?;
    let out = cfg.output_dir();
    io::write_json(&out.join("config.json"), &cfg)?;
    Ok((cfg, out))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Outcome<&'a Path> {
    path.as_deref().ok_or_else(|| usage(format!("{what} is required")))
}

fn load_pairs(path: &Path, orientation: Orientation) -> anyhow::Result<Vec<PreferencePair>> {
    ingest_records(path, orientation).map_err(|e| match e {
        DataError::Records(errors) => {
            let lines: Vec<String> = errors.iter().map(|r| format!("  line {}: {}", r.line, r.message)).collect();
            anyhow!("{}: {} invalid record(s)\n{}", path.display(), errors.len(), lines.join("\n"))
        }
        other => anyhow!(other),
    })
}

fn write_pairs(path: &Path, pairs: &[PreferencePair]) -> anyhow::Result<()> {
    io::write_jsonl(path, pairs.iter().map(PreferencePair::to_record))
}

fn synth(a: SynthArgs) -> Outcome {
    let fractions = match a.fractions.as_deref() {
        Some([t, v, s]) => Some(SplitFractions::new(*t, *v, *s)),
        Some(_) => return Err(usage("--fractions takes three values")),
        None => None,
    };
    let (cfg, out) = resolve(&a.common, |c| {
        let s = &mut c.synth;
        s.seed = c.seed;
        set(&mut s.n_prompts, a.prompts);
        set(&mut s.k_responses, a.responses);
        set(&mut s.true_gamma, a.true_gamma);
        set(&mut s.feature_dim, a.feature_dim);
        set(&mut s.feature_noise, a.feature_noise);
        set(&mut s.embedding_dim, a.embedding_dim);
        set(&mut s.fractions, fractions);
        if a.pairs_per_prompt.is_some() {
            s.pairs_per_prompt = a.pairs_per_prompt;
        }
    })?;
    let data = generate_synthetic_bt(&cfg.synth).map_err(|e| usage(format!("synth: {e}")))?;
    write_pairs(&out.join("train.jsonl"), &data.split.train)?;
    write_pairs(&out.join("validation.jsonl"), &data.split.validation)?;
    write_pairs(&out.join("test.jsonl"), &data.split.test)?;
    io::write_json(&out.join("truth.json"), &data.truth)?;
    // candidate pools for held-out prompts, in generation order
    let held_out: std::collections::BTreeSet<&str> = data.split.test.iter().map(|p| p.prompt_id.as_str()).collect();
    let pools = data.truth.prompts.iter().filter(|p| held_out.contains(p.prompt_id.as_str())).map(|p| CandidatePool {
        prompt_id: p.prompt_id.clone(),
        candidates: p
            .responses
            .iter()
            .map(|r| Candidate {
                response: ResponseRef::new(r.id.clone())
                    .with_features(r.features.clone())
                    .with_embedding(r.embedding.clone()),
                quality: r.reward,
            })
            .collect(),
    });
    io::write_jsonl(&out.join("candidates.jsonl"), pools)?;
    println!(
        "wrote {} train / {} validation / {} test pairs to {}",
        data.split.train.len(),
        data.split.validation.len(),
        data.split.test.len(),
        out.display()
    );
    Ok(())
}

/// Training pairs after the configured margin, length and quartile filters.
fn prepare_train(cfg: &ExperimentConfig, pairs: Vec<PreferencePair>) -> anyhow::Result<Vec<PreferencePair>> {
    let mut pairs = pairs;
    if let Some(max) = cfg.data.max_tokens {
        pairs = length_filter(&pairs, max)?;
    }
    if let Some(t) = cfg.data.min_margin {
        let f = filter_by_margin(&pairs, t)?;
        if let Some(w) = f.warning {
            eprintln!("warning: {w}");
        }
        pairs = f.pairs;
    }
    if let Some(s) = cfg.data.sampler {
        pairs = quartile_sample(&pairs, s.target_size, s.per_prompt_cap, cfg.seed)?.pairs;
    }
    Ok(pairs)
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| {
        if a.train.is_some() {
            c.data.train = a.train.clone();
        }
        if a.validation.is_some() {
            c.data.validation = a.validation.clone();
        }
        if a.test.is_some() {
            c.data.test = a.test.clone();
        }
        set(&mut c.loss.kind, a.loss);
        set(&mut c.scorer.kind, a.scorer);
        set(&mut c.scorer.feature_dim, a.feature_dim);
        set(&mut c.loss.beta, a.beta);
        set(&mut c.loss.gamma, a.gamma);
        set(&mut c.loss.epsilon, a.epsilon);
        set(&mut c.trainer.lr, a.lr);
        set(&mut c.trainer.max_epochs, a.epochs);
        set(&mut c.trainer.batch_size, a.batch_size);
        set(&mut c.data.orientation, a.orientation);
    })?;
    if cfg.loss.kind.is_policy_loss() != cfg.scorer.kind.is_policy() {
        return Err(usage(format!("loss {:?} cannot train scorer {:?}", cfg.loss.kind, cfg.scorer.kind)));
    }
    let train_path = required(&cfg.data.train, "data.train (--train)")?;
    let tc = cfg.train_config();

    let outcome = if cfg.loss.kind == LossKind::KtoWeighted {
        if cfg.scorer.kind != ScorerKind::TabularPolicy {
            return Err(usage("kto_weighted trains a tabular-policy scorer (binary records carry no features)"));
        }
        let records = ingest_binary_records(train_path).map_err(|e| anyhow!("{}: {e}", train_path.display()))?;
        let mut sets = CandidateSets::default();
        for r in &records {
            sets.insert(&r.prompt_id, &ResponseRef::new(r.response.clone()));
        }
        let policy = Policy::tabular(sets);
        let reference = ReferencePolicy::frozen(&policy);
        train_kto(&tc, Model::Policy { policy, reference }, &records).map_err(anyhow::Error::from)?
    } else {
        let orient = cfg.data.orientation;
        let train_pairs = prepare_train(&cfg, load_pairs(train_path, orient)?)?;
        let validation = match &cfg.data.validation {
            Some(p) => load_pairs(p, orient)?,
            None => Vec::new(),
        };
        let test = match &cfg.data.test {
            Some(p) => load_pairs(p, cfg.data.eval_orientation)?,
            None => Vec::new(),
        };
        let split = DatasetSplit { train: train_pairs, validation, test, seed: cfg.seed };
        let model = Model::new(cfg.scorer.kind, cfg.scorer.feature_dim, split.all()).context("building scorer")?;
        train(&tc, model, &split).map_err(anyhow::Error::from)?
    };

    let checkpoint = Checkpoint::new(outcome.model, outcome.optimizer, cfg.seed, cfg.model_echo());
    io::write_json(&out.join("checkpoint.json"), &checkpoint)?;
    io::write_atomic(&out.join("metrics.jsonl"), metrics_jsonl(&outcome.metrics).as_bytes())?;
    io::write_atomic(
        &out.join("margin_trajectory.csv"),
        trajectory_csv(&margin_trajectory(&outcome.metrics)).as_bytes(),
    )?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "trained {} epochs (returned epoch {}), final train loss {:.6}",
            outcome.metrics.len(),
            outcome.best_epoch,
            last.train_loss
        );
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    io::read_json(path)
}

/// β recorded in the checkpoint, unless overridden.
fn checkpoint_beta(ck: &Checkpoint, fallback: f64) -> f64 {
    ck.config.pointer("/loss/beta").and_then(serde_json::Value::as_f64).unwrap_or(fallback)
}

#[derive(Serialize)]
struct Calibration<'a> {
    n_pairs: usize,
    ece: f64,
    bins: &'a [mmpo::ReliabilityBin],
}

fn eval_cmd(a: EvalArgs, calibration_only: bool) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| {
        if a.checkpoint.is_some() {
            c.eval.checkpoint = a.checkpoint.clone();
        }
        if a.data.is_some() {
            c.data.test = a.data.clone();
        }
        set(&mut c.data.eval_orientation, a.orientation);
        set(&mut c.eval.bins, a.bins);
        set(&mut c.workers, a.workers);
    })?;
    let ck_path = required(&cfg.eval.checkpoint, "eval.checkpoint (--checkpoint)")?;
    let data_path = required(&cfg.data.test, "data.test (--data)")?;
    let mut ck = load_checkpoint(ck_path)?;
    let beta = a.beta.unwrap_or_else(|| checkpoint_beta(&ck, cfg.loss.beta));
    let pairs = load_pairs(data_path, cfg.data.eval_orientation)?;
    ck.model.extend_candidates(CandidateSets::from_pairs(&pairs)).context("registering held-out prompts")?;
    let ds = differences_with_workers(&ck.model, &pairs, beta, cfg.workers).map_err(anyhow::Error::from)?;

    if calibration_only {
        let (ece, bins) = calibration_from_differences(&ds, cfg.eval.bins).map_err(anyhow::Error::from)?;
        io::write_atomic(&out.join("reliability.csv"), reliability_csv(&bins).as_bytes())?;
        io::write_json(&out.join("calibration.json"), &Calibration { n_pairs: pairs.len(), ece, bins: &bins })?;
        println!("ECE {ece:.6} over {} pairs", pairs.len());
        return Ok(());
    }
    let report = report_from_differences(&pairs, &ds, cfg.eval.bins, cfg.eval.category_weights.as_ref())
        .map_err(anyhow::Error::from)?;
    io::write_json(&out.join("report.json"), &report)?;
    io::write_atomic(&out.join("reliability.csv"), reliability_csv(&report.bins).as_bytes())?;
    println!("accuracy {:.6}  ECE {:.6}  pairs {}", report.accuracy, report.ece, report.n_pairs);
    Ok(())
}

fn bestof(a: BestofArgs) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| {
        if a.checkpoint.is_some() {
            c.eval.checkpoint = a.checkpoint.clone();
        }
        if a.candidates.is_some() {
            c.data.candidates = a.candidates.clone();
        }
        set(&mut c.eval.best_of_n, a.ns.clone());
    })?;
    let ck_path = required(&cfg.eval.checkpoint, "eval.checkpoint (--checkpoint)")?;
    let pools_path = required(&cfg.data.candidates, "data.candidates (--candidates)")?;
    let mut ck = load_checkpoint(ck_path)?;
    let beta = a.beta.unwrap_or_else(|| checkpoint_beta(&ck, cfg.loss.beta));
    let pools: Vec<CandidatePool> = io::read_jsonl(pools_path)?;
    let mut sets = CandidateSets::default();
    for pool in &pools {
        for c in &pool.candidates {
            sets.insert(&pool.prompt_id, &c.response);
        }
    }
    ck.model.extend_candidates(sets).context("registering candidate pools")?;
    let curve = best_of_n_curve(&pools, &cfg.eval.best_of_n, |prompt, r| ck.model.response_score(prompt, r, beta))
        .map_err(anyhow::Error::from)?;
    io::write_atomic(&out.join("bestofn.csv"), best_of_n_csv(&curve).as_bytes())?;
    for (n, q) in &curve {
        println!("n={n:<4} mean quality {q:.6}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleReport {
    input_pairs: usize,
    after_filters: usize,
    sampled: usize,
    boundaries: [f64; 3],
    per_quartile: [usize; 4],
    uniform_fallback: bool,
}

fn sample(a: SampleArgs) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| {
        if a.data.is_some() {
            c.data.train = a.data.clone();
        }
        if let Some(target) = a.target {
            let cap = a.cap.or(c.data.sampler.map(|s| s.per_prompt_cap)).unwrap_or(5);
            c.data.sampler = Some(config::SamplerConfig { target_size: target, per_prompt_cap: cap });
        } else if let (Some(cap), Some(s)) = (a.cap, c.data.sampler.as_mut()) {
            s.per_prompt_cap = cap;
        }
        if a.min_margin.is_some() {
            c.data.min_margin = a.min_margin;
        }
        if a.max_tokens.is_some() {
            c.data.max_tokens = a.max_tokens;
        }
        set(&mut c.data.orientation, a.orientation);
    })?;
    let path = required(&cfg.data.train, "data.train (--data)")?;
    let Some(sampler) = cfg.data.sampler else {
        return Err(usage("data.sampler (--target) is required"));
    };
    let pairs = load_pairs(path, cfg.data.orientation)?;
    let input_pairs = pairs.len();
    let filtered = prepare_train(
        &ExperimentConfig { data: config::DataConfig { sampler: None, ..cfg.data.clone() }, ..cfg.clone() },
        pairs,
    )?;
    let after_filters = filtered.len();
    let s = quartile_sample(&filtered, sampler.target_size, sampler.per_prompt_cap, cfg.seed)
        .map_err(anyhow::Error::from)?;
    write_pairs(&out.join("sampled.jsonl"), &s.pairs)?;
    let report = SampleReport {
        input_pairs,
        after_filters,
        sampled: s.pairs.len(),
        boundaries: s.boundaries,
        per_quartile: s.per_quartile,
        uniform_fallback: s.uniform_fallback,
    };
    io::write_json(&out.join("sample_report.json"), &report)?;
    println!("sampled {} of {} pairs (per quartile {:?})", report.sampled, after_filters, report.per_quartile);
    Ok(())
}

#[derive(Serialize)]
struct SimilarityFit {
    #[serde(flatten)]
    model: mmpo::bt_target::SimilarityMarginModel,
    estimated: usize,
    skipped: BTreeMap<String, String>,
}

fn estimate(a: EstimateArgs) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| set(&mut c.data.orientation, a.orientation))?;
    let fit_pairs = load_pairs(&a.fit, cfg.data.orientation)?;
    let model = fit_similarity_margin_map(&fit_pairs).map_err(|e| anyhow!("fitting {}: {e}", a.fit.display()))?;
    if model.degenerate {
        eprintln!("warning: similarity is constant across fit pairs; every estimate equals the mean margin");
    }
    let mut pairs = load_pairs(&a.data, cfg.data.orientation)?;
    let results = estimate_margins(&model, &mut pairs);
    let mut kept = Vec::new();
    let mut skipped = BTreeMap::new();
    for (mut p, r) in pairs.into_iter().zip(results) {
        match r {
            Ok(m) => {
                p.score_chosen = m;
                p.score_rejected = 0.0;
                kept.push(p);
            }
            Err(e) => {
                eprintln!("warning: skipping pair {}: {e}", p.label());
                skipped.insert(p.label(), e.to_string());
            }
        }
    }
    write_pairs(&out.join("estimated.jsonl"), &kept)?;
    io::write_json(&out.join("similarity_fit.json"), &SimilarityFit { model, estimated: kept.len(), skipped })?;
    println!(
        "margin ≈ {:.4}·(1 − cos) + {:.4}  (r = {:.3}, n = {}); estimated {} pairs",
        model.slope,
        model.intercept,
        model.pearson_r,
        model.n_fit,
        kept.len()
    );
    if kept.is_empty() {
        return Err(anyhow!("no pair in {} could be estimated", a.data.display()).into());
    }
    Ok(())
}

fn curve(a: CurveArgs) -> Outcome {
    let (cfg, out) = resolve(&a.common, |c| {
        set(&mut c.curve.gammas, a.gammas.clone());
        set(&mut c.curve.m_min, a.m_min);
        set(&mut c.curve.m_max, a.m_max);
        set(&mut c.curve.step, a.step);
    })?;
    let c = &cfg.curve;
    let points = preference_curve(&c.gammas, c.m_min, c.m_max, c.step).map_err(|e| usage(format!("curve: {e}")))?;
    let csv = curve_to_csv(&points);
    io::write_atomic(&out.join("curve.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}
