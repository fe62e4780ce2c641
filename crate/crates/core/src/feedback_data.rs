//! Pairwise feedback ingestion, orientation, sampling, filtering and synthetic
//! Bradley-Terry corpora with known ground truth.
//!
//! Records arrive as one JSON object per line. Each record carries two
//! responses and a score for each (a judge rating or a net vote count). A
//! [`PreferencePair`] is the oriented form: `chosen` is the higher-scored
//! response and `margin` is the nonnegative score gap.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::sigmoid;
use crate::seeds;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", format_record_errors(.0))]
    Records(Vec<RecordError>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("requested {requested} pairs but at most {achievable} can be sampled under the per-prompt cap")]
    SampleTooLarge { requested: usize, achievable: usize },
    #[error("pair {pair} has no token lengths")]
    MissingTokens { pair: String },
    #[error("invalid split fractions {0:?}: each must be >= 0 and they must sum to 1")]
    InvalidFractions((f64, f64, f64)),
    #[error("reward range [{0}, {1}] is empty")]
    DegenerateRange(f64, f64),
}

fn format_record_errors(errors: &[RecordError]) -> String {
    let lines: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    format!("{} malformed record(s): {}", errors.len(), lines.join("; "))
}

/// A rejected input line (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLengths {
    pub prompt: u32,
    pub a: u32,
    pub b: u32,
}

/// One raw pairwise record as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub prompt_id: String,
    #[serde(rename = "prompt", default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    pub response_a: String,
    pub response_b: String,
    pub score_a: f64,
    pub score_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenLengths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_b: Option<Vec<f64>>,
}

/// A response as seen by scorers: an identifier unique within its prompt,
/// plus whatever payloads the record carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u32>,
}

impl ResponseRef {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), features: None, embedding: None, tokens: None }
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_tokens(mut self, tokens: u32) -> Self {
        self.tokens = Some(tokens);
        self
    }
}

/// One oriented comparison. `margin` is `|score_chosen - score_rejected|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub pair_id: u64,
    pub prompt_id: String,
    pub chosen: ResponseRef,
    pub rejected: ResponseRef,
    pub score_chosen: f64,
    pub score_rejected: f64,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u32>,
}

impl PreferencePair {
    /// Builds a pair with `margin = |score_chosen - score_rejected|`; no orientation is applied.
    pub fn new(
        pair_id: u64,
        prompt_id: impl Into<String>,
        chosen: ResponseRef,
        rejected: ResponseRef,
        score_chosen: f64,
        score_rejected: f64,
    ) -> Self {
        Self {
            pair_id,
            prompt_id: prompt_id.into(),
            chosen,
            rejected,
            score_chosen,
            score_rejected,
            margin: (score_chosen - score_rejected).abs(),
            target_p: None,
            category: None,
            prompt_tokens: None,
        }
    }

    pub fn label(&self) -> String {
        format!("#{} (prompt {})", self.pair_id, self.prompt_id)
    }

    /// Converts back to the on-disk schema with `chosen` as response `a`.
    pub fn to_record(&self) -> FeedbackRecord {
        let tokens = match (self.prompt_tokens, self.chosen.tokens, self.rejected.tokens) {
            (Some(prompt), Some(a), Some(b)) => Some(TokenLengths { prompt, a, b }),
            _ => None,
        };
        FeedbackRecord {
            prompt_id: self.prompt_id.clone(),
            prompt_text: None,
            response_a: self.chosen.id.clone(),
            response_b: self.rejected.id.clone(),
            score_a: self.score_chosen,
            score_b: self.score_rejected,
            category: self.category.clone(),
            tokens,
            features_a: self.chosen.features.clone(),
            features_b: self.rejected.features.clone(),
            embedding_a: self.chosen.embedding.clone(),
            embedding_b: self.rejected.embedding.clone(),
        }
    }
}

/// How a record's two responses become `(chosen, rejected)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Higher score is chosen; ties keep `a` as chosen.
    #[default]
    ByScore,
    /// Response `a` is chosen regardless of scores (externally labelled data).
    AsWritten,
}

impl FeedbackRecord {
    pub fn into_pair(self, pair_id: u64, orientation: Orientation) -> Result<PreferencePair, String> {
        for (name, s) in [("score_a", self.score_a), ("score_b", self.score_b)] {
            if !s.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        let a = ResponseRef {
            id: self.response_a,
            features: self.features_a,
            embedding: self.embedding_a,
            tokens: self.tokens.map(|t| t.a),
        };
        let b = ResponseRef {
            id: self.response_b,
            features: self.features_b,
            embedding: self.embedding_b,
            tokens: self.tokens.map(|t| t.b),
        };
        let swap = orientation == Orientation::ByScore && self.score_b > self.score_a;
        let (chosen, rejected, sc, sr) =
            if swap { (b, a, self.score_b, self.score_a) } else { (a, b, self.score_a, self.score_b) };
        let mut pair = PreferencePair::new(pair_id, self.prompt_id, chosen, rejected, sc, sr);
        pair.category = self.category;
        pair.prompt_tokens = self.tokens.map(|t| t.prompt);
        Ok(pair)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Reads a JSONL pair file. Blank lines are skipped; `pair_id` is the 1-based line number.
pub fn ingest_records(path: &Path, orientation: Orientation) -> Result<Vec<PreferencePair>, DataError> {
    parse_records(open(path)?, orientation).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io { path: path.to_path_buf(), source },
        other => other,
    })
}

pub fn parse_records(reader: impl BufRead, orientation: Orientation) -> Result<Vec<PreferencePair>, DataError> {
    let mut pairs = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io { path: PathBuf::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<FeedbackRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.into_pair(line_no as u64, orientation));
        match parsed {
            Ok(pair) => pairs.push(pair),
            Err(message) => errors.push(RecordError { line: line_no, message }),
        }
    }
    if errors.is_empty() {
        Ok(pairs)
    } else {
        Err(DataError::Records(errors))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Desirable,
    Undesirable,
}

/// Single-response feedback with a desirability label and a quality score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFeedbackRecord {
    pub prompt_id: String,
    pub response: String,
    pub label: BinaryLabel,
    pub score: f64,
}

pub fn parse_binary_records(reader: impl BufRead) -> Result<Vec<BinaryFeedbackRecord>, DataError> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: PathBuf::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<BinaryFeedbackRecord>(&line) {
            Ok(r) if r.score.is_finite() => out.push(r),
            Ok(_) => errors.push(RecordError { line: idx + 1, message: "score is not finite".into() }),
            Err(e) => errors.push(RecordError { line: idx + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(DataError::Records(errors))
    }
}

pub fn ingest_binary_records(path: &Path) -> Result<Vec<BinaryFeedbackRecord>, DataError> {
    parse_binary_records(open(path)?)
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Margin quartile boundaries `[q1, q2, q3]`.
pub fn margin_quartiles(pairs: &[PreferencePair]) -> [f64; 3] {
    let mut margins: Vec<f64> = pairs.iter().map(|p| p.margin).collect();
    margins.sort_by(f64::total_cmp);
    [0.25, 0.5, 0.75].map(|q| quantile_sorted(&margins, q))
}

/// Quartile index of a margin; values equal to a boundary fall in the lower quartile.
pub fn quartile_of(margin: f64, bounds: &[f64; 3]) -> usize {
    bounds.iter().position(|&b| margin <= b).unwrap_or(3)
}

#[derive(Debug, Clone)]
pub struct QuartileSample {
    pub pairs: Vec<PreferencePair>,
    pub boundaries: [f64; 3],
    pub per_quartile: [usize; 4],
    /// Set when at least one quartile was empty and plain seeded sampling was used.
    pub uniform_fallback: bool,
}

/// Round-robin draw from shuffled buckets honouring the per-prompt cap.
/// Returns the chosen indices per bucket.
fn capped_draw(buckets: &[Vec<usize>], quotas: &[usize], pairs: &[PreferencePair], cap: usize) -> Vec<Vec<usize>> {
    let mut taken = vec![Vec::new(); buckets.len()];
    let mut cursor = vec![0usize; buckets.len()];
    let mut per_prompt: HashMap<&str, usize> = HashMap::new();
    loop {
        let mut progressed = false;
        for q in 0..buckets.len() {
            if taken[q].len() >= quotas[q] {
                continue;
            }
            while cursor[q] < buckets[q].len() {
                let idx = buckets[q][cursor[q]];
                cursor[q] += 1;
                let count = per_prompt.entry(pairs[idx].prompt_id.as_str()).or_insert(0);
                if *count < cap {
                    *count += 1;
                    taken[q].push(idx);
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            return taken;
        }
    }
}

/// Draws an equal number of pairs from each margin quartile, at most
/// `per_prompt_cap` per prompt.
pub fn quartile_sample(
    pairs: &[PreferencePair],
    target_size: usize,
    per_prompt_cap: usize,
    seed: u64,
) -> Result<QuartileSample, DataError> {
    if pairs.is_empty() {
        return Err(DataError::InvalidArgument("cannot sample from an empty pair list".into()));
    }
    if target_size < 4 {
        return Err(DataError::InvalidArgument(format!("target_size must be >= 4, got {target_size}")));
    }
    if per_prompt_cap == 0 {
        return Err(DataError::InvalidArgument("per_prompt_cap must be >= 1".into()));
    }
    let mut rng = seeds::stream(seed, seeds::SAMPLE);
    let boundaries = margin_quartiles(pairs);
    let mut buckets = vec![Vec::new(); 4];
    for (i, p) in pairs.iter().enumerate() {
        buckets[quartile_of(p.margin, &boundaries)].push(i);
    }
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }

    let uniform_fallback = buckets.iter().any(Vec::is_empty);
    let chosen: Vec<usize> = if uniform_fallback {
        let mut all: Vec<usize> = (0..pairs.len()).collect();
        all.shuffle(&mut rng);
        let taken = capped_draw(&[all], &[target_size], pairs, per_prompt_cap);
        if taken[0].len() < target_size {
            return Err(DataError::SampleTooLarge { requested: target_size, achievable: taken[0].len() });
        }
        taken.into_iter().flatten().collect()
    } else {
        let quotas: Vec<usize> = (0..4).map(|q| target_size / 4 + usize::from(q < target_size % 4)).collect();
        let taken = capped_draw(&buckets, &quotas, pairs, per_prompt_cap);
        if taken.iter().zip(&quotas).any(|(t, &q)| t.len() < q) {
            let open = capped_draw(&buckets, &[usize::MAX; 4], pairs, per_prompt_cap);
            let counts: Vec<usize> = open.iter().map(Vec::len).collect();
            let floor = counts.iter().copied().min().unwrap_or(0);
            let achievable = counts.iter().map(|&c| c.min(floor + 1)).sum();
            return Err(DataError::SampleTooLarge { requested: target_size, achievable });
        }
        // interleave so the output does not cluster by quartile
        let longest = taken.iter().map(Vec::len).max().unwrap_or(0);
        (0..longest).flat_map(|i| taken.iter().filter_map(move |t| t.get(i).copied())).collect()
    };

    let mut per_quartile = [0usize; 4];
    let out: Vec<PreferencePair> = chosen
        .into_iter()
        .map(|i| {
            per_quartile[quartile_of(pairs[i].margin, &boundaries)] += 1;
            pairs[i].clone()
        })
        .collect();
    Ok(QuartileSample { pairs: out, boundaries, per_quartile, uniform_fallback })
}

#[derive(Debug, Clone)]
pub struct MarginFilter {
    pub pairs: Vec<PreferencePair>,
    pub retained_fraction: f64,
    pub warning: Option<String>,
}

/// Keeps pairs with `margin > threshold` (strict).
pub fn filter_by_margin(pairs: &[PreferencePair], threshold: f64) -> Result<MarginFilter, DataError> {
    if !threshold.is_finite() {
        return Err(DataError::InvalidArgument(format!("threshold must be finite, got {threshold}")));
    }
    let kept: Vec<PreferencePair> = pairs.iter().filter(|p| p.margin > threshold).cloned().collect();
    let retained_fraction = if pairs.is_empty() { 0.0 } else { kept.len() as f64 / pairs.len() as f64 };
    let warning = kept.is_empty().then(|| format!("no pairs have margin above {threshold}; result is empty"));
    Ok(MarginFilter { pairs: kept, retained_fraction, warning })
}

/// Drops pairs whose prompt or either response is longer than `max_tokens` (inclusive bound).
pub fn length_filter(pairs: &[PreferencePair], max_tokens: u32) -> Result<Vec<PreferencePair>, DataError> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (Some(prompt), Some(a), Some(b)) = (p.prompt_tokens, p.chosen.tokens, p.rejected.tokens) else {
            return Err(DataError::MissingTokens { pair: p.label() });
        };
        if prompt <= max_tokens && a <= max_tokens && b <= max_tokens {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Whitespace token count, the default length measure for raw text.
pub fn whitespace_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const fn new(train: f64, validation: f64, test: f64) -> Self {
        Self { train, validation, test }
    }

    fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.validation, self.test];
        let ok = parts.iter().all(|f| f.is_finite() && *f >= 0.0)
            && self.train > 0.0
            && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DataError::InvalidFractions((self.train, self.validation, self.test)))
        }
    }

    /// Rounded sizes for `n` items; the test split absorbs rounding.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let validation = ((self.validation * n as f64).round() as usize).min(n - train);
        (train, validation, n - train - validation)
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::new(0.8, 0.1, 0.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<PreferencePair>,
    pub validation: Vec<PreferencePair>,
    pub test: Vec<PreferencePair>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn all(&self) -> impl Iterator<Item = &PreferencePair> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

fn partition<T: Clone>(items: &[T], fractions: SplitFractions, seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeds::stream(seed, seeds::SPLIT));
    let (n_train, n_val, _) = fractions.sizes(items.len());
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for (rank, &idx) in order.iter().enumerate() {
        let which = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
        parts[which].push(idx);
    }
    let [a, b, c] = parts.map(|mut idx| {
        idx.sort_unstable();
        idx.into_iter().map(|i| items[i].clone()).collect::<Vec<T>>()
    });
    (a, b, c)
}

/// Seeded disjoint partition of pairs; each split keeps input order.
pub fn split_dataset(
    pairs: &[PreferencePair],
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    fractions.validate()?;
    let (train, validation, test) = partition(pairs, fractions, seed);
    Ok(DatasetSplit { train, validation, test, seed })
}

/// Like [`split_dataset`] but assigns whole prompts, so held-out pairs come from unseen prompts.
pub fn split_by_prompt(
    pairs: &[PreferencePair],
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    fractions.validate()?;
    let mut prompts: Vec<&str> = Vec::new();
    for p in pairs {
        if !prompts.contains(&p.prompt_id.as_str()) {
            prompts.push(&p.prompt_id);
        }
    }
    let (train, validation, _) = partition(&prompts, fractions, seed);
    let mut split = DatasetSplit { seed, ..Default::default() };
    for p in pairs {
        let id = p.prompt_id.as_str();
        if train.contains(&id) {
            split.train.push(p.clone());
        } else if validation.contains(&id) {
            split.validation.push(p.clone());
        } else {
            split.test.push(p.clone());
        }
    }
    Ok(split)
}

/// Draws a Bradley-Terry label: `true` when the first response wins.
pub fn sample_preference(reward_first: f64, reward_second: f64, gamma: f64, rng: &mut impl Rng) -> bool {
    rng.gen::<f64>() < sigmoid(gamma * (reward_first - reward_second))
}

/// Parameters of a synthetic Bradley-Terry corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_prompts: usize,
    pub k_responses: usize,
    pub true_gamma: f64,
    pub reward_range: (f64, f64),
    pub seed: u64,
    /// Length of `features`; component 0 is the (optionally noisy) reward, the rest is pure noise.
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Length of `embedding`; the first two components place the response on an arc so that
    /// cosine similarity falls as the reward gap grows.
    pub embedding_dim: usize,
    /// Keep only this many random pairs per prompt instead of all `k(k-1)/2`.
    pub pairs_per_prompt: Option<usize>,
    pub fractions: SplitFractions,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_prompts: 500,
            k_responses: 4,
            true_gamma: 1.0,
            reward_range: (0.0, 5.0),
            seed: 0,
            feature_dim: 4,
            feature_noise: 0.0,
            embedding_dim: 4,
            pairs_per_prompt: None,
            fractions: SplitFractions::new(0.7, 0.1, 0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResponse {
    pub id: String,
    pub reward: f64,
    pub features: Vec<f64>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTruth {
    pub prompt_id: String,
    pub responses: Vec<SynthResponse>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub prompts: Vec<PromptTruth>,
}

impl GroundTruth {
    pub fn reward_table(&self) -> BTreeMap<(String, String), f64> {
        self.prompts
            .iter()
            .flat_map(|p| p.responses.iter().map(|r| ((p.prompt_id.clone(), r.id.clone()), r.reward)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub split: DatasetSplit,
    pub truth: GroundTruth,
}

/// Generates a corpus whose labels follow `P(i ≻ j) = σ(γ·(r_i − r_j))`.
///
/// `chosen` is the sampled winner, so a pair may be oriented against its true
/// rewards. Scores hold the true rewards (a noise-free judge), so re-orienting
/// with [`orient_by_score`] recovers judge-labelled data. The whole corpus is a
/// pure function of `spec.seed`.
pub fn generate_synthetic_bt(spec: &SynthSpec) -> Result<SyntheticData, DataError> {
    let (lo, hi) = spec.reward_range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(DataError::DegenerateRange(lo, hi));
    }
    if spec.k_responses < 2 || spec.n_prompts < 1 {
        return Err(DataError::InvalidArgument("need k_responses >= 2 and n_prompts >= 1".into()));
    }
    if spec.feature_dim < 1 || spec.embedding_dim < 2 {
        return Err(DataError::InvalidArgument("need feature_dim >= 1 and embedding_dim >= 2".into()));
    }
    if !spec.true_gamma.is_finite() {
        return Err(DataError::InvalidArgument("true_gamma must be finite".into()));
    }
    let mut rng = seeds::stream(spec.seed, seeds::SYNTH);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let mut truth = GroundTruth::default();
    let mut pairs = Vec::new();
    let width = spec.k_responses.to_string().len();
    for p in 0..spec.n_prompts {
        let prompt_id = format!("p{p:05}");
        let responses: Vec<SynthResponse> = (0..spec.k_responses)
            .map(|k| {
                let reward = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                let mut features = Vec::with_capacity(spec.feature_dim);
                let jitter: f64 = rng.sample(StandardNormal);
                features.push(reward + spec.feature_noise * jitter);
                for _ in 1..spec.feature_dim {
                    features.push(rng.sample(StandardNormal));
                }
                let angle = (reward - lo) / span * std::f64::consts::FRAC_PI_2;
                let mut embedding = vec![angle.cos(), angle.sin()];
                for _ in 2..spec.embedding_dim {
                    let z: f64 = rng.sample(StandardNormal);
                    embedding.push(0.05 * z);
                }
                SynthResponse { id: format!("r{k:0width$}"), reward, features, embedding }
            })
            .collect();

        let mut combos: Vec<(usize, usize)> =
            (0..spec.k_responses).flat_map(|i| ((i + 1)..spec.k_responses).map(move |j| (i, j))).collect();
        if let Some(limit) = spec.pairs_per_prompt {
            combos.shuffle(&mut rng);
            combos.truncate(limit);
            combos.sort_unstable();
        }
        for (i, j) in combos {
            let (ri, rj) = (&responses[i], &responses[j]);
            let first_wins = sample_preference(ri.reward, rj.reward, spec.true_gamma, &mut rng);
            let (w, l) = if first_wins { (ri, rj) } else { (rj, ri) };
            let as_ref = |r: &SynthResponse| {
                ResponseRef::new(r.id.clone()).with_features(r.features.clone()).with_embedding(r.embedding.clone())
            };
            let pair = PreferencePair::new(pairs.len() as u64, &prompt_id, as_ref(w), as_ref(l), w.reward, l.reward);
            pairs.push(pair);
        }
        truth.prompts.push(PromptTruth { prompt_id, responses });
    }
    let split = split_by_prompt(&pairs, spec.fractions, spec.seed)?;
    Ok(SyntheticData { split, truth })
}

/// Re-applies the score orientation rule: higher score chosen, ties unchanged.
pub fn orient_by_score(pairs: &[PreferencePair]) -> Vec<PreferencePair> {
    pairs
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if p.score_rejected > p.score_chosen {
                std::mem::swap(&mut p.chosen, &mut p.rejected);
                std::mem::swap(&mut p.score_chosen, &mut p.score_rejected);
            }
            p
        })
        .collect()
}
