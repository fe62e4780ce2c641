//! Closed-form pairwise losses and their derivatives.
//!
//! Every pairwise objective here is the binary cross-entropy between a target
//! probability `p` and the model's Bradley-Terry probability `σ(d)`, where `d`
//! is the score difference `r̂(chosen) − r̂(rejected)`:
//!
//! ```text
//! L(d, p) = −[p·log σ(d) + (1 − p)·log σ(−d)],   ∂L/∂d = σ(d) − p
//! ```
//!
//! `p = 1` is the usual reward-model / DPO loss, `p = 1 − ε` is conservative
//! DPO, and `p = σ(γ·m)` is margin matching.

use serde::{Deserialize, Serialize};

use crate::bt_target::{target_probability, TargetError};
use crate::feedback_data::{BinaryLabel, PreferencePair};
use crate::math::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("target probability must lie in [0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("epsilon must lie in [0, 0.5), got {0}")]
    InvalidEpsilon(f64),
    #[error("beta must be finite and > 0, got {0}")]
    InvalidBeta(f64),
    #[error("weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("cannot reduce an empty batch")]
    EmptyBatch,
    #[error("loss kind {0:?} has no pairwise target; it trains on binary feedback")]
    NotPairwise(LossKind),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Margin-matched soft targets on the policy's implicit reward.
    Mmpo,
    /// Hard-target DPO.
    Dpo,
    /// DPO with label smoothing `1 − ε`.
    Cdpo,
    /// Hard-target reward modeling.
    RmHard,
    /// Margin-matched reward modeling.
    RmSoft,
    /// Per-sample weighted binary objective on single responses.
    KtoWeighted,
}

impl LossKind {
    /// Policy losses score pairs through an implicit reward against a reference.
    pub fn is_policy_loss(self) -> bool {
        matches!(self, Self::Mmpo | Self::Dpo | Self::Cdpo | Self::KtoWeighted)
    }

    pub fn is_soft(self) -> bool {
        matches!(self, Self::Mmpo | Self::RmSoft)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_margin: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { kind: LossKind::Mmpo, beta: 0.01, gamma: 1.1, epsilon: 0.1, max_margin: None }
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(LossError::InvalidBeta(self.beta));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(TargetError::InvalidGamma(self.gamma).into());
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(LossError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }

    /// Training target for one oriented pair.
    pub fn target_for(&self, pair: &PreferencePair) -> Result<f64, LossError> {
        match self.kind {
            LossKind::Mmpo | LossKind::RmSoft => {
                let m = self.max_margin.map_or(pair.margin, |cap| pair.margin.min(cap));
                Ok(target_probability(m, self.gamma)?)
            }
            LossKind::Dpo | LossKind::RmHard => Ok(1.0),
            LossKind::Cdpo => Ok(1.0 - self.epsilon),
            LossKind::KtoWeighted => Err(LossError::NotPairwise(self.kind)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossOutput {
    pub value: f64,
    /// Derivative with respect to the score difference `d`.
    pub grad_d: f64,
    /// Derivatives with respect to each raw input, when the loss has several.
    pub per_input_grads: Vec<f64>,
}

/// Soft-target binary cross-entropy on a score difference.
pub fn soft_bce(d: f64, target_p: f64) -> Result<LossOutput, LossError> {
    if !d.is_finite() {
        return Err(LossError::NonFinite("d"));
    }
    if !(0.0..=1.0).contains(&target_p) {
        return Err(LossError::InvalidTarget(target_p));
    }
    let value = -(target_p * log_sigmoid(d) + (1.0 - target_p) * log_sigmoid(-d));
    Ok(LossOutput { value, grad_d: sigmoid(d) - target_p, per_input_grads: Vec::new() })
}

/// Explicit reward-model loss; `target_p = 1` is the standard pairwise cross-entropy.
pub fn rm_pair_loss(reward_chosen: f64, reward_rejected: f64, target_p: f64) -> Result<LossOutput, LossError> {
    if !(reward_chosen.is_finite() && reward_rejected.is_finite()) {
        return Err(LossError::NonFinite("reward"));
    }
    let mut out = soft_bce(reward_chosen - reward_rejected, target_p)?;
    out.per_input_grads = vec![out.grad_d, -out.grad_d];
    Ok(out)
}

/// Soft-target loss on the implicit reward `d = β·(logratio_w − logratio_l)`,
/// where `logratio = log π_θ(y) − log π_ref(y)`. `target_p = 1` is plain DPO.
pub fn mmpo_dpo_pair_loss(logratio_w: f64, logratio_l: f64, beta: f64, target_p: f64) -> Result<LossOutput, LossError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(LossError::InvalidBeta(beta));
    }
    if !(logratio_w.is_finite() && logratio_l.is_finite()) {
        return Err(LossError::NonFinite("log-ratio"));
    }
    let mut out = soft_bce(beta * (logratio_w - logratio_l), target_p)?;
    out.per_input_grads = vec![beta * out.grad_d, -beta * out.grad_d];
    Ok(out)
}

/// Conservative DPO: the hard target smoothed to `1 − ε`.
pub fn cdpo_pair_loss(d: f64, epsilon: f64) -> Result<LossOutput, LossError> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(LossError::InvalidEpsilon(epsilon));
    }
    soft_bce(d, 1.0 - epsilon)
}

/// Per-sample desirability weight `σ(γ·(score − median))`.
pub fn kto_weight(score: f64, median_score: f64, gamma: f64) -> f64 {
    sigmoid(gamma * (score - median_score))
}

/// Median of a score list (mean of the middle two for even lengths).
pub fn median(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    Some(if s.len().is_multiple_of(2) { 0.5 * (s[mid - 1] + s[mid]) } else { s[mid] })
}

/// Weighted logistic loss on a single response's implicit reward `d`.
pub fn kto_weighted_loss(d: f64, label: BinaryLabel, weight: f64) -> Result<LossOutput, LossError> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(LossError::InvalidWeight(weight));
    }
    if !d.is_finite() {
        return Err(LossError::NonFinite("d"));
    }
    let (value, grad_d) = match label {
        BinaryLabel::Desirable => (-log_sigmoid(d), sigmoid(d) - 1.0),
        BinaryLabel::Undesirable => (-log_sigmoid(-d), sigmoid(d)),
    };
    Ok(LossOutput { value: weight * value, grad_d: weight * grad_d, per_input_grads: Vec::new() })
}

/// Arithmetic mean of values and gradients, accumulated in input order.
pub fn batch_reduce(losses: &[LossOutput]) -> Result<LossOutput, LossError> {
    let first = losses.first().ok_or(LossError::EmptyBatch)?;
    let n = losses.len() as f64;
    let mut value = 0.0;
    let mut grad_d = 0.0;
    let mut per_input = vec![0.0; first.per_input_grads.len()];
    for l in losses {
        value += l.value;
        grad_d += l.grad_d;
        for (acc, g) in per_input.iter_mut().zip(&l.per_input_grads) {
            *acc += g;
        }
    }
    per_input.iter_mut().for_each(|g| *g /= n);
    Ok(LossOutput { value: value / n, grad_d: grad_d / n, per_input_grads: per_input })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::math::logit;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    // Reference values from 40-digit mpmath evaluation.
    const NEG_LOG_SIG_1: f64 = 0.313_261_687_518_222_83;

    #[test]
    fn soft_bce_examples() {
        let l = soft_bce(0.0, 0.5).unwrap();
        assert!((l.value - LN_2).abs() < 1e-15);
        assert_eq!(l.grad_d, 0.0);
        assert!((soft_bce(1.0, 1.0).unwrap().value - NEG_LOG_SIG_1).abs() < 1e-15);
        let l = soft_bce(1.0, 0.75).unwrap();
        assert!((l.value - 0.563_261_687_518_222_83).abs() < 1e-15);
        assert!((l.grad_d + 0.018_941_421_369_995_12).abs() < 1e-15);
        assert!(soft_bce(0.0, 1.5).is_err());
        assert!(soft_bce(0.0, -0.1).is_err());
    }

    #[test]
    fn rm_examples() {
        let l = rm_pair_loss(2.0, 2.0, 0.5).unwrap();
        assert!((l.value - LN_2).abs() < 1e-15);
        let l = rm_pair_loss(3.0, 2.0, 1.0).unwrap();
        assert!((l.value - NEG_LOG_SIG_1).abs() < 1e-15);
        assert_eq!(l.per_input_grads, vec![l.grad_d, -l.grad_d]);
    }

    #[test]
    fn mmpo_dpo_examples() {
        let l = mmpo_dpo_pair_loss(0.3, 0.3, 0.1, 0.5).unwrap();
        assert!((l.value - LN_2).abs() < 1e-15);
        assert!(l.per_input_grads.iter().all(|g| *g == 0.0));
        // β = 0.01, Δ = 100 → d = 1; mpmath: 0.41326168751822283405, σ(1) − 0.9 = −0.16894142136999512075
        let l = mmpo_dpo_pair_loss(100.0, 0.0, 0.01, 0.9).unwrap();
        assert!((l.value - 0.413_261_687_518_222_83).abs() < 1e-12);
        assert!((l.grad_d + 0.168_941_421_369_995_12).abs() < 1e-12);
        assert!((l.per_input_grads[0] - 0.01 * l.grad_d).abs() < 1e-18);
        let hard = mmpo_dpo_pair_loss(2.0, -1.0, 0.5, 1.0).unwrap();
        assert_eq!(hard.value, -log_sigmoid(1.5));
        assert!(mmpo_dpo_pair_loss(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cdpo_examples() {
        for d in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(cdpo_pair_loss(d, 0.0).unwrap(), soft_bce(d, 1.0).unwrap());
            assert_eq!(cdpo_pair_loss(d, 0.1).unwrap(), soft_bce(d, 0.9).unwrap());
        }
        assert!(cdpo_pair_loss(0.0, 0.5).is_err());
        // near ε = 0.5 the stationary point approaches d = 0
        let eps = 0.5 - 1e-9;
        assert!(logit(1.0 - eps).abs() < 1e-8);
        assert!(cdpo_pair_loss(0.0, eps).unwrap().grad_d.abs() < 1e-8);
    }

    #[test]
    fn kto_examples() {
        assert_eq!(kto_weight(6.0, 6.0, 1.0), 0.5);
        assert!((kto_weight(8.0, 6.0, 1.0) - 0.880_797_077_977_882_4).abs() < 1e-15);
        assert!(kto_weight(7.0, 6.0, 1.0) < kto_weight(7.5, 6.0, 1.0));
        let zero = kto_weighted_loss(2.0, BinaryLabel::Desirable, 0.0).unwrap();
        assert_eq!((zero.value, zero.grad_d), (0.0, 0.0));
        assert!((kto_weighted_loss(0.0, BinaryLabel::Desirable, 1.0).unwrap().value - LN_2).abs() < 1e-15);
        for d in [-2.0, 0.3, 4.0] {
            let u = kto_weighted_loss(d, BinaryLabel::Undesirable, 0.7).unwrap();
            let m = kto_weighted_loss(-d, BinaryLabel::Desirable, 0.7).unwrap();
            assert_eq!(u.value, m.value);
            assert!((u.grad_d + m.grad_d).abs() < 1e-15);
        }
        assert!(kto_weighted_loss(0.0, BinaryLabel::Desirable, 1.1).is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn reduce_examples() {
        let a = LossOutput { value: 0.2, grad_d: 1.0, per_input_grads: vec![1.0, -1.0] };
        let b = LossOutput { value: 0.4, grad_d: 0.0, per_input_grads: vec![0.0, 0.0] };
        assert_eq!(batch_reduce(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(batch_reduce(&[a.clone(), a.clone()]).unwrap().value, 0.2);
        let m = batch_reduce(&[a, b]).unwrap();
        assert!((m.value - 0.3).abs() < 1e-15);
        assert_eq!(m.per_input_grads, vec![0.5, -0.5]);
        assert_eq!(batch_reduce(&[]), Err(LossError::EmptyBatch));
    }

    #[test]
    fn config_targets() {
        let pair = PreferencePair::new(0, "p", crate::ResponseRef::new("a"), crate::ResponseRef::new("b"), 3.0, 1.0);
        let mut cfg = LossConfig { kind: LossKind::Mmpo, gamma: 1.0, ..Default::default() };
        assert!((cfg.target_for(&pair).unwrap() - sigmoid(2.0)).abs() < 1e-15);
        cfg.kind = LossKind::Cdpo;
        assert_eq!(cfg.target_for(&pair).unwrap(), 0.9);
        cfg.kind = LossKind::RmHard;
        assert_eq!(cfg.target_for(&pair).unwrap(), 1.0);
        cfg.kind = LossKind::KtoWeighted;
        assert!(cfg.target_for(&pair).is_err());
        assert!(LossConfig { epsilon: 0.5, ..Default::default() }.validate().is_err());
        assert!(LossConfig { beta: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn hard_target_gradient_never_vanishes() {
        for i in -300..=300 {
            assert!(soft_bce(i as f64 * 0.1, 1.0).unwrap().grad_d < 0.0);
        }
    }

    proptest! {
        #[test]
        fn swap_symmetry(d in -30.0f64..30.0, p in 0.0f64..=1.0) {
            let a = soft_bce(d, p).unwrap().value;
            let b = soft_bce(-d, 1.0 - p).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn margin_matching_minimizer(p in 0.01f64..0.99) {
            let d_star = logit(p);
            prop_assert!(soft_bce(d_star, p).unwrap().grad_d.abs() <= 1e-12);
            let v = soft_bce(d_star, p).unwrap().value;
            prop_assert!(soft_bce(d_star + 0.1, p).unwrap().value > v);
            prop_assert!(soft_bce(d_star - 0.1, p).unwrap().value > v);
        }

        #[test]
        fn gamma_margin_fixed_point(m in 0.0f64..10.0, g in 0.0f64..2.0) {
            let p = target_probability(m, g).unwrap();
            prop_assume!(p < 1.0 - 1e-6);
            prop_assert!((logit(p) - g * m).abs() <= 1e-6);
        }
    }
}
