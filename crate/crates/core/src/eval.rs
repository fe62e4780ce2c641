//! Held-out metrics: pairwise accuracy, expected calibration error with
//! reliability bins, best-of-n selection and category-weighted accuracy.
//!
//! A scorer's prediction for a pair is the score difference `d`. The pair is
//! counted correct when `d > 0` (ties are wrong) and the predicted winner's
//! confidence is `σ(|d|) ∈ [0.5, 1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::feedback_data::{PreferencePair, ResponseRef};
use crate::math::sigmoid;
use crate::scorers::{Model, ScorerError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty set")]
    Empty,
    #[error("n_bins must be >= 1")]
    InvalidBins,
    #[error("pair {0} has no category")]
    MissingCategory(String),
    #[error("no weight given for category {0:?}")]
    MissingWeight(String),
    #[error("prompt {prompt} has {available} candidates, fewer than n = {n}")]
    TooFewCandidates { prompt: String, available: usize, n: usize },
    #[error("n must be >= 1")]
    ZeroN,
    #[error("confidences and outcomes differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Score differences for each pair, in input order.
pub fn differences(model: &Model, pairs: &[PreferencePair], beta: f64) -> Result<Vec<f64>, EvalError> {
    pairs.iter().map(|p| Ok(model.pair_difference(p, beta)?.0)).collect()
}

/// [`differences`] scored on up to `workers` threads over contiguous chunks.
/// Results are concatenated in input order, so the output does not depend on
/// the worker count.
pub fn differences_with_workers(
    model: &Model,
    pairs: &[PreferencePair],
    beta: f64,
    workers: usize,
) -> Result<Vec<f64>, EvalError> {
    let workers = workers.clamp(1, pairs.len().max(1));
    if workers == 1 {
        return differences(model, pairs, beta);
    }
    let chunk = pairs.len().div_ceil(workers);
    let parts: Vec<Result<Vec<f64>, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            pairs.chunks(chunk).map(|part| scope.spawn(move || differences(model, part, beta))).collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

pub fn accuracy_from_differences(ds: &[f64]) -> Result<f64, EvalError> {
    if ds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ds.iter().filter(|&&d| d > 0.0).count() as f64 / ds.len() as f64)
}

pub fn pairwise_accuracy(model: &Model, pairs: &[PreferencePair], beta: f64) -> Result<f64, EvalError> {
    accuracy_from_differences(&differences(model, pairs, beta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Zero for empty bins.
    pub mean_confidence: f64,
    /// Zero for empty bins.
    pub empirical_accuracy: f64,
}

/// Equal-width bin edges over `[0.5, 1]`.
pub fn bin_edges(n_bins: usize) -> Vec<f64> {
    (0..=n_bins).map(|k| 0.5 + 0.5 * k as f64 / n_bins as f64).collect()
}

/// Bin index with right-closed bins `(lower, upper]`; 0.5 itself goes to the first bin.
fn bin_index(confidence: f64, edges: &[f64]) -> usize {
    let n = edges.len() - 1;
    let mut idx = (((confidence - 0.5) * 2.0 * n as f64).ceil() as isize - 1).clamp(0, n as isize - 1) as usize;
    while idx + 1 < n && confidence > edges[idx + 1] {
        idx += 1;
    }
    while idx > 0 && confidence <= edges[idx] {
        idx -= 1;
    }
    idx
}

/// ECE over raw `(confidence, correct)` predictions. Empty bins contribute nothing.
pub fn calibration_from_predictions(
    confidences: &[f64],
    correct: &[bool],
    n_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>), EvalError> {
    if n_bins == 0 {
        return Err(EvalError::InvalidBins);
    }
    if confidences.len() != correct.len() {
        return Err(EvalError::LengthMismatch);
    }
    if confidences.is_empty() {
        return Err(EvalError::Empty);
    }
    let edges = bin_edges(n_bins);
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = bin_index(c, &edges);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (mean_confidence, empirical_accuracy) = if count[b] > 0 {
                let k = count[b] as f64;
                (conf_sum[b] / k, hits[b] as f64 / k)
            } else {
                (0.0, 0.0)
            };
            if count[b] > 0 {
                ece += count[b] as f64 / n * (empirical_accuracy - mean_confidence).abs();
            }
            ReliabilityBin {
                lower: edges[b],
                upper: edges[b + 1],
                count: count[b],
                mean_confidence,
                empirical_accuracy,
            }
        })
        .collect();
    Ok((ece, bins))
}

/// Confidence `σ(|d|)` for the predicted winner; correct iff `d > 0`.
pub fn calibration_from_differences(ds: &[f64], n_bins: usize) -> Result<(f64, Vec<ReliabilityBin>), EvalError> {
    let conf: Vec<f64> = ds.iter().map(|d| sigmoid(d.abs())).collect();
    let correct: Vec<bool> = ds.iter().map(|&d| d > 0.0).collect();
    calibration_from_predictions(&conf, &correct, n_bins)
}

pub fn expected_calibration_error(
    model: &Model,
    pairs: &[PreferencePair],
    beta: f64,
    n_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>), EvalError> {
    calibration_from_differences(&differences(model, pairs, beta)?, n_bins)
}

/// CSV with header `bin_lower,bin_upper,count,confidence,accuracy`.
pub fn reliability_csv(bins: &[ReliabilityBin]) -> String {
    let mut s = String::from("bin_lower,bin_upper,count,confidence,accuracy\n");
    for b in bins {
        s.push_str(&format!("{},{},{},{},{}\n", b.lower, b.upper, b.count, b.mean_confidence, b.empirical_accuracy));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub response: ResponseRef,
    /// Ground-truth or judge quality.
    pub quality: f64,
}

/// Candidates for one prompt in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub prompt_id: String,
    pub candidates: Vec<Candidate>,
}

/// Mean true quality of the model's pick among the first `n` candidates of
/// each prompt. Ties go to the lowest index.
pub fn best_of_n<E>(
    pools: &[CandidatePool],
    n: usize,
    mut score: impl FnMut(&str, &ResponseRef) -> Result<f64, E>,
) -> Result<f64, EvalError>
where
    EvalError: From<E>,
{
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    if pools.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = 0.0;
    for pool in pools {
        if pool.candidates.len() < n {
            return Err(EvalError::TooFewCandidates {
                prompt: pool.prompt_id.clone(),
                available: pool.candidates.len(),
                n,
            });
        }
        let mut best: Option<(f64, f64)> = None;
        for c in &pool.candidates[..n] {
            let s = score(&pool.prompt_id, &c.response)?;
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, c.quality));
            }
        }
        total += best.map_or(0.0, |(_, q)| q);
    }
    Ok(total / pools.len() as f64)
}

/// `(n, mean selected quality)` for each `n`.
pub fn best_of_n_curve<E>(
    pools: &[CandidatePool],
    ns: &[usize],
    mut score: impl FnMut(&str, &ResponseRef) -> Result<f64, E>,
) -> Result<Vec<(usize, f64)>, EvalError>
where
    EvalError: From<E>,
{
    ns.iter().map(|&n| Ok((n, best_of_n(pools, n, &mut score)?))).collect()
}

/// CSV with header `n,mean_quality`.
pub fn best_of_n_csv(curve: &[(usize, f64)]) -> String {
    let mut s = String::from("n,mean_quality\n");
    for (n, q) in curve {
        s.push_str(&format!("{n},{q}\n"));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub per_category: BTreeMap<String, f64>,
    pub weighted_accuracy: f64,
}

/// Per-category accuracy and its weight-normalized mean.
pub fn category_weighted_accuracy(
    model: &Model,
    pairs: &[PreferencePair],
    beta: f64,
    weights: &BTreeMap<String, f64>,
) -> Result<CategoryAccuracy, EvalError> {
    let ds = differences(model, pairs, beta)?;
    category_accuracy_from_differences(pairs, &ds, weights)
}

pub fn category_accuracy_from_differences(
    pairs: &[PreferencePair],
    ds: &[f64],
    weights: &BTreeMap<String, f64>,
) -> Result<CategoryAccuracy, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tallies: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (p, &d) in pairs.iter().zip(ds) {
        let cat = p.category.clone().ok_or_else(|| EvalError::MissingCategory(p.label()))?;
        let t = tallies.entry(cat).or_default();
        t.0 += usize::from(d > 0.0);
        t.1 += 1;
    }
    let per_category: BTreeMap<String, f64> =
        tallies.into_iter().map(|(c, (hit, n))| (c, hit as f64 / n as f64)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (cat, acc) in &per_category {
        let w = *weights.get(cat).ok_or_else(|| EvalError::MissingWeight(cat.clone()))?;
        num += w * acc;
        den += w;
    }
    let weighted_accuracy = if den > 0.0 { num / den } else { 0.0 };
    Ok(CategoryAccuracy { per_category, weighted_accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_pairs: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub mean_margin: f64,
    pub bins: Vec<ReliabilityBin>,
    pub per_category: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_accuracy: Option<f64>,
}

/// Full report. Category statistics are filled when `weights` is given.
pub fn evaluate(
    model: &Model,
    pairs: &[PreferencePair],
    beta: f64,
    n_bins: usize,
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<EvalReport, EvalError> {
    report_from_differences(pairs, &differences(model, pairs, beta)?, n_bins, weights)
}

/// Report from precomputed differences, one per pair.
pub fn report_from_differences(
    pairs: &[PreferencePair],
    ds: &[f64],
    n_bins: usize,
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<EvalReport, EvalError> {
    if ds.len() != pairs.len() {
        return Err(EvalError::LengthMismatch);
    }
    let accuracy = accuracy_from_differences(ds)?;
    let (ece, bins) = calibration_from_differences(ds, n_bins)?;
    let (per_category, weighted_accuracy) = match weights {
        Some(w) => {
            let c = category_accuracy_from_differences(pairs, ds, w)?;
            (c.per_category, Some(c.weighted_accuracy))
        }
        None => (BTreeMap::new(), None),
    };
    Ok(EvalReport {
        n_pairs: pairs.len(),
        accuracy,
        ece,
        mean_margin: ds.iter().sum::<f64>() / ds.len() as f64,
        bins,
        per_category,
        weighted_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worker_count_does_not_change_differences() {
        use crate::feedback_data::{generate_synthetic_bt, SynthSpec};
        use crate::scorers::{LinearReward, RewardModel};
        let split = generate_synthetic_bt(&SynthSpec { n_prompts: 37, ..Default::default() }).unwrap().split;
        let model = Model::Reward(RewardModel::Linear(LinearReward { weights: vec![1.0, -0.5, 0.25, 2.0] }));
        let serial = differences(&model, &split.train, 1.0).unwrap();
        for w in [0, 2, 3, 8, 1000] {
            assert_eq!(differences_with_workers(&model, &split.train, 1.0, w).unwrap(), serial);
        }
        assert!(differences_with_workers(&model, &[], 1.0, 4).unwrap().is_empty());
    }

    #[test]
    fn accuracy_tie_rule() {
        assert_eq!(accuracy_from_differences(&[1.0, -1.0, 2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(accuracy_from_differences(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(accuracy_from_differences(&[]), Err(EvalError::Empty));
    }

    #[test]
    fn hand_ece_example() {
        let (ece, bins) = calibration_from_predictions(&[0.9, 0.9, 0.6, 0.6], &[true, true, true, false], 10).unwrap();
        assert!((ece - 0.10).abs() < 1e-12);
        assert_eq!(bins[7].count, 2);
        assert!((bins[7].upper - 0.9).abs() < 1e-15);
        assert_eq!(bins[1].count, 2);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
    }

    #[test]
    fn single_bin_ece() {
        let conf = vec![0.8; 10];
        let correct: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let (ece, _) = calibration_from_predictions(&conf, &correct, 10).unwrap();
        assert!((ece - 0.1).abs() < 1e-12);
    }

    #[test]
    fn perfect_calibration() {
        let conf = [0.75, 0.75, 0.75, 0.75, 1.0];
        let correct = [true, true, true, false, true];
        assert!(calibration_from_predictions(&conf, &correct, 10).unwrap().0.abs() < 1e-15);
    }

    #[test]
    fn bin_boundaries() {
        let edges = bin_edges(10);
        assert_eq!(bin_index(0.5, &edges), 0);
        assert_eq!(bin_index(0.55, &edges), 0);
        assert_eq!(bin_index(0.550_000_000_001, &edges), 1);
        assert_eq!(bin_index(1.0, &edges), 9);
        assert!(calibration_from_predictions(&[0.6], &[true], 0).is_err());
    }

    fn pool(prompt: &str, qualities: &[f64]) -> CandidatePool {
        CandidatePool {
            prompt_id: prompt.into(),
            candidates: qualities
                .iter()
                .enumerate()
                .map(|(i, &q)| Candidate { response: ResponseRef::new(format!("c{i}")), quality: q })
                .collect(),
        }
    }

    fn quality_lookup<'a>(pools: &'a [CandidatePool]) -> impl FnMut(&str, &ResponseRef) -> Result<f64, EvalError> + 'a {
        move |prompt, r| {
            let p = pools.iter().find(|p| p.prompt_id == prompt).unwrap();
            Ok(p.candidates.iter().find(|c| c.response.id == r.id).unwrap().quality)
        }
    }

    #[test]
    fn best_of_n_examples() {
        let pools = vec![pool("a", &[1.0, 5.0, 3.0]), pool("b", &[2.0, 0.0, 4.0])];
        assert_eq!(best_of_n(&pools, 1, quality_lookup(&pools)).unwrap(), 1.5);
        assert_eq!(best_of_n(&pools, 3, quality_lookup(&pools)).unwrap(), 4.5);
        let mut truth = quality_lookup(&pools);
        let anti = best_of_n(&pools, 3, |p: &str, r: &ResponseRef| truth(p, r).map(|q| -q)).unwrap();
        assert_eq!(anti, 0.5);
        assert!(matches!(best_of_n(&pools, 4, quality_lookup(&pools)), Err(EvalError::TooFewCandidates { .. })));
        // constant scores pick the first candidate
        assert_eq!(best_of_n(&pools, 3, |_: &str, _: &ResponseRef| Ok::<_, EvalError>(0.0)).unwrap(), 1.5);
        let csv = best_of_n_csv(&[(1, 1.5), (3, 4.5)]);
        assert_eq!(csv, "n,mean_quality\n1,1.5\n3,4.5\n");
    }

    fn cat_pair(cat: &str) -> PreferencePair {
        let mut p = PreferencePair::new(0, "p", ResponseRef::new("a"), ResponseRef::new("b"), 1.0, 0.0);
        p.category = Some(cat.into());
        p
    }

    #[test]
    fn category_weighting() {
        let pairs = vec![cat_pair("A"), cat_pair("B"), cat_pair("B")];
        let ds = [1.0, 1.0, -1.0];
        let w: BTreeMap<String, f64> = [("A".to_string(), 3.0), ("B".to_string(), 1.0)].into();
        let r = category_accuracy_from_differences(&pairs, &ds, &w).unwrap();
        assert!((r.weighted_accuracy - 0.875).abs() < 1e-15);
        let eq: BTreeMap<String, f64> = [("A".to_string(), 1.0), ("B".to_string(), 1.0)].into();
        assert!((category_accuracy_from_differences(&pairs, &ds, &eq).unwrap().weighted_accuracy - 0.75).abs() < 1e-15);
        let only_a: BTreeMap<String, f64> = [("A".to_string(), 1.0)].into();
        assert_eq!(category_accuracy_from_differences(&pairs, &ds, &only_a), Err(EvalError::MissingWeight("B".into())));
        let single = category_accuracy_from_differences(&pairs[..1], &ds[..1], &only_a).unwrap();
        assert_eq!(single.weighted_accuracy, 1.0);
    }

    proptest! {
        #[test]
        fn ece_bounds_and_counts(ds in proptest::collection::vec(-8.0f64..8.0, 1..200), bins in 1usize..25) {
            let (ece, b) = calibration_from_differences(&ds, bins).unwrap();
            prop_assert!((0.0..=1.0).contains(&ece));
            prop_assert_eq!(b.iter().map(|x| x.count).sum::<usize>(), ds.len());
            for w in b.windows(2) {
                prop_assert_eq!(w[0].upper, w[1].lower);
            }
            prop_assert_eq!(b[0].lower, 0.5);
            prop_assert_eq!(b[bins - 1].upper, 1.0);
        }
    }
}
