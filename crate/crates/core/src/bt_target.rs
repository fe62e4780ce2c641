//! Soft preference targets from quality margins, and similarity-based margin estimates.
//!
//! Under a Bradley-Terry model with rationality coefficient `gamma`, a pair
//! whose quality gap is `m` is preferred with probability `σ(gamma·m)`. That
//! probability becomes the training target in place of the hard label 1.

use serde::{Deserialize, Serialize};

use crate::feedback_data::PreferencePair;
use crate::math::{sigmoid, ONE_BELOW};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TargetError {
    #[error("margin must be >= 0 after orientation, got {0}")]
    NegativeMargin(f64),
    #[error("gamma must be finite and >= 0, got {0}")]
    InvalidGamma(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("need at least 2 pairs with embeddings to fit, got {0}")]
    TooFewPairs(usize),
    #[error("pair {0} is missing an embedding")]
    MissingEmbedding(String),
    #[error("invalid curve grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginSource {
    #[default]
    JudgeScores,
    Votes,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub gamma: f64,
    #[serde(default)]
    pub margin_source: MarginSource,
    /// Optional cap applied to margins before scaling (useful for raw vote counts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_margin: Option<f64>,
}

impl MarginSpec {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, margin_source: MarginSource::JudgeScores, max_margin: None }
    }

    pub fn target(&self, margin: f64) -> Result<f64, TargetError> {
        let m = match self.max_margin {
            Some(cap) => margin.min(cap),
            None => margin,
        };
        target_probability(m, self.gamma)
    }

    /// Writes `target_p` onto every pair.
    pub fn annotate(&self, pairs: &mut [PreferencePair]) -> Result<(), TargetError> {
        for p in pairs {
            p.target_p = Some(self.target(p.margin)?);
        }
        Ok(())
    }
}

/// `σ(gamma·margin)`, clamped strictly below one.
pub fn target_probability(margin: f64, gamma: f64) -> Result<f64, TargetError> {
    if !margin.is_finite() {
        return Err(TargetError::NonFinite("margin"));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(TargetError::InvalidGamma(gamma));
    }
    if margin < 0.0 {
        return Err(TargetError::NegativeMargin(margin));
    }
    Ok(sigmoid(gamma * margin).min(ONE_BELOW))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gamma: f64,
    pub margin: f64,
    pub probability: f64,
}

/// Target probability over a `(gamma, margin)` grid. Margins run from `m_min`
/// to `m_max` inclusive in steps of `step`; rows are ordered by gamma, then margin.
pub fn preference_curve(gammas: &[f64], m_min: f64, m_max: f64, step: f64) -> Result<Vec<CurvePoint>, TargetError> {
    if gammas.is_empty() {
        return Err(TargetError::InvalidGrid("no gamma values".into()));
    }
    if !(step > 0.0 && step.is_finite()) || !(m_min >= 0.0 && m_max >= m_min && m_max.is_finite()) {
        return Err(TargetError::InvalidGrid(format!("margins {m_min}..={m_max} step {step}")));
    }
    let n = ((m_max - m_min) / step + 1e-9).floor() as usize;
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(sorted.len() * (n + 1));
    for &gamma in &sorted {
        for i in 0..=n {
            let margin = m_min + i as f64 * step;
            out.push(CurvePoint { gamma, margin, probability: target_probability(margin, gamma)? });
        }
    }
    Ok(out)
}

/// CSV with header `gamma,margin,probability`.
pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("gamma,margin,probability\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.gamma, p.margin, p.probability));
    }
    s
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, TargetError> {
    if u.len() != v.len() {
        return Err(TargetError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(TargetError::ZeroVector);
    }
    let c = crate::math::dot(u, v) / (nu * nv);
    Ok(c.clamp(-1.0, 1.0))
}

/// Affine map `margin ≈ slope·(1 − cos) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMarginModel {
    pub slope: f64,
    pub intercept: f64,
    /// Correlation between cosine similarity and margin.
    pub pearson_r: f64,
    pub n_fit: usize,
    /// Set when the predictor was constant and no slope could be identified.
    #[serde(default)]
    pub degenerate: bool,
}

impl SimilarityMarginModel {
    pub fn predict(&self, cosine: f64) -> f64 {
        (self.slope * (1.0 - cosine) + self.intercept).max(0.0)
    }
}

fn pair_similarity(p: &PreferencePair) -> Result<f64, TargetError> {
    match (&p.chosen.embedding, &p.rejected.embedding) {
        (Some(a), Some(b)) => cosine_similarity(a, b),
        _ => Err(TargetError::MissingEmbedding(p.label())),
    }
}

/// Ordinary least squares of judge margin on `1 − cos`.
pub fn fit_similarity_margin_map(pairs: &[PreferencePair]) -> Result<SimilarityMarginModel, TargetError> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.chosen.embedding.is_some() && p.rejected.embedding.is_some())
        .map(|p| pair_similarity(p).map(|c| (c, p.margin)))
        .collect::<Result<_, _>>()?;
    let n = usable.len();
    if n < 2 {
        return Err(TargetError::TooFewPairs(n));
    }
    let nf = n as f64;
    let mean_x = usable.iter().map(|(c, _)| 1.0 - c).sum::<f64>() / nf;
    let mean_y = usable.iter().map(|(_, m)| m).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(c, m) in &usable {
        let dx = (1.0 - c) - mean_x;
        let dy = m - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * nf * (1.0 + mean_x * mean_x) {
        return Ok(SimilarityMarginModel { slope: 0.0, intercept: mean_y, pearson_r: 0.0, n_fit: n, degenerate: true });
    }
    let slope = sxy / sxx;
    // x = 1 − cos, so corr(cos, m) = −corr(x, m)
    let pearson_r = if syy > 0.0 { (-sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) } else { 0.0 };
    Ok(SimilarityMarginModel { slope, intercept: mean_y - slope * mean_x, pearson_r, n_fit: n, degenerate: false })
}

/// Replaces each pair's margin with the model's clamped estimate.
/// Returns one result per pair; pairs without embeddings yield an error and are left untouched.
pub fn estimate_margins(model: &SimilarityMarginModel, pairs: &mut [PreferencePair]) -> Vec<Result<f64, TargetError>> {
    pairs
        .iter_mut()
        .map(|p| {
            let m = model.predict(pair_similarity(p)?);
            p.margin = m;
            Ok(m)
        })
        .collect()
}
