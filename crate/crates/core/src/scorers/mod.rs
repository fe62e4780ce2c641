//! Trainable reward functions and candidate-set policies with explicit gradients.
//!
//! Reward scorers assign `r(x, y)` directly. Policies define a softmax over a
//! fixed candidate set per prompt, and score a pair through the implicit reward
//! `β·(log π_θ(y) − log π_ref(y))`. All parameters start at zero, so a fresh
//! policy equals a uniform reference and every pair starts at `d = 0`.

mod optim;
mod params;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::feedback_data::{PreferencePair, ResponseRef};
use crate::math::{dot, log_sum_exp};

pub use optim::{update_params, Moments, Optimizer, OptimizerState};
pub use params::{Gradient, ParamsMut, ResponseKey, Table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("response {response} has no feature vector")]
    MissingFeatures { response: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("response {response} is not a candidate for prompt {prompt}")]
    UnknownResponse { prompt: String, response: String },
    #[error("non-finite gradient {value} for parameter {parameter}")]
    NonFiniteGradient { parameter: String, value: f64 },
    #[error("incompatible: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    TabularReward,
    LinearReward,
    TabularPolicy,
    LogLinearPolicy,
}

impl ScorerKind {
    pub fn is_policy(self) -> bool {
        matches!(self, Self::TabularPolicy | Self::LogLinearPolicy)
    }
}

fn features_of(r: &ResponseRef) -> Result<&[f64], ScorerError> {
    r.features.as_deref().ok_or_else(|| ScorerError::MissingFeatures { response: r.id.clone() })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TabularReward {
    pub params: Table,
}

impl TabularReward {
    pub fn reward(&self, prompt_id: &str, response_id: &str) -> f64 {
        self.params.get(&ResponseKey::new(prompt_id, response_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReward {
    pub weights: Vec<f64>,
}

impl LinearReward {
    pub fn new(dim: usize) -> Self {
        Self { weights: vec![0.0; dim] }
    }

    pub fn reward(&self, response: &ResponseRef) -> Result<f64, ScorerError> {
        let phi = features_of(response)?;
        if phi.len() != self.weights.len() {
            return Err(ScorerError::DimensionMismatch { expected: self.weights.len(), got: phi.len() });
        }
        Ok(dot(&self.weights, phi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardModel {
    Tabular(TabularReward),
    Linear(LinearReward),
}

impl RewardModel {
    pub fn reward(&self, prompt_id: &str, response: &ResponseRef) -> Result<f64, ScorerError> {
        match self {
            RewardModel::Tabular(t) => Ok(t.reward(prompt_id, &response.id)),
            RewardModel::Linear(l) => l.reward(response),
        }
    }
}

/// `d = r(chosen) − r(rejected)` and `∂d/∂params`.
pub fn score_pair(reward: &RewardModel, pair: &PreferencePair) -> Result<(f64, Gradient), ScorerError> {
    match reward {
        RewardModel::Tabular(t) => {
            let kw = ResponseKey::new(&pair.prompt_id, &pair.chosen.id);
            let kl = ResponseKey::new(&pair.prompt_id, &pair.rejected.id);
            let d = t.params.get(&kw) - t.params.get(&kl);
            let mut g = Table::default();
            g.add(kw, 1.0);
            g.add(kl, -1.0);
            Ok((d, Gradient::Sparse(g)))
        }
        RewardModel::Linear(l) => {
            let (fw, fl) = (features_of(&pair.chosen)?, features_of(&pair.rejected)?);
            for f in [fw, fl] {
                if f.len() != l.weights.len() {
                    return Err(ScorerError::DimensionMismatch { expected: l.weights.len(), got: f.len() });
                }
            }
            let diff: Vec<f64> = fw.iter().zip(fl).map(|(a, b)| a - b).collect();
            Ok((dot(&l.weights, &diff), Gradient::Dense(diff)))
        }
    }
}

/// Per-prompt candidate responses, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSets(pub BTreeMap<String, Vec<ResponseRef>>);

impl CandidateSets {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a PreferencePair>) -> Self {
        let mut sets = CandidateSets::default();
        for p in pairs {
            sets.insert(&p.prompt_id, &p.chosen);
            sets.insert(&p.prompt_id, &p.rejected);
        }
        sets
    }

    pub fn insert(&mut self, prompt_id: &str, response: &ResponseRef) {
        let set = self.0.entry(prompt_id.to_string()).or_default();
        if !set.iter().any(|r| r.id == response.id) {
            let mut r = ResponseRef::new(response.id.clone());
            r.features = response.features.clone();
            set.push(r);
        }
    }

    fn get(&self, prompt_id: &str, response_id: &str) -> Result<(&[ResponseRef], usize), ScorerError> {
        self.0
            .get(prompt_id)
            .and_then(|set| set.iter().position(|r| r.id == response_id).map(|i| (set.as_slice(), i)))
            .ok_or_else(|| ScorerError::UnknownResponse { prompt: prompt_id.into(), response: response_id.into() })
    }
}

/// Free logit per (prompt, response).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub logits: Table,
    pub candidates: CandidateSets,
}

/// Logits `w·φ(y)` with one weight vector shared across prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearPolicy {
    pub weights: Vec<f64>,
    pub candidates: CandidateSets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Policy {
    Tabular(TabularPolicy),
    LogLinear(LogLinearPolicy),
}

impl Policy {
    pub fn tabular(candidates: CandidateSets) -> Self {
        Policy::Tabular(TabularPolicy { logits: Table::default(), candidates })
    }

    pub fn log_linear(dim: usize, candidates: CandidateSets) -> Result<Self, ScorerError> {
        for r in candidates.0.values().flatten() {
            let phi = features_of(r)?;
            if phi.len() != dim {
                return Err(ScorerError::DimensionMismatch { expected: dim, got: phi.len() });
            }
        }
        Ok(Policy::LogLinear(LogLinearPolicy { weights: vec![0.0; dim], candidates }))
    }

    pub fn candidates(&self) -> &CandidateSets {
        match self {
            Policy::Tabular(t) => &t.candidates,
            Policy::LogLinear(l) => &l.candidates,
        }
    }

    fn logits(&self, prompt_id: &str, set: &[ResponseRef]) -> Vec<f64> {
        match self {
            Policy::Tabular(t) => set.iter().map(|r| t.logits.get(&ResponseKey::new(prompt_id, &r.id))).collect(),
            // features were validated at construction
            Policy::LogLinear(l) => set.iter().map(|r| dot(&l.weights, r.features.as_deref().unwrap_or(&[]))).collect(),
        }
    }

    /// Softmax over the prompt's candidate set, in candidate order.
    pub fn probabilities(&self, prompt_id: &str) -> Option<Vec<f64>> {
        let set = self.candidates().0.get(prompt_id)?;
        let z = self.logits(prompt_id, set);
        let lse = log_sum_exp(z.iter().copied());
        Some(z.iter().map(|x| (x - lse).exp()).collect())
    }

    pub fn log_prob(&self, prompt_id: &str, response_id: &str) -> Result<f64, ScorerError> {
        let (set, idx) = self.candidates().get(prompt_id, response_id)?;
        let z = self.logits(prompt_id, set);
        Ok(z[idx] - log_sum_exp(z.iter().copied()))
    }

    /// `log π(y)` and its gradient: `e_y − π` (tabular) or `φ_y − E_π[φ]` (log-linear).
    pub fn log_prob_with_grad(&self, prompt_id: &str, response_id: &str) -> Result<(f64, Gradient), ScorerError> {
        let (set, idx) = self.candidates().get(prompt_id, response_id)?;
        let z = self.logits(prompt_id, set);
        let lse = log_sum_exp(z.iter().copied());
        let probs: Vec<f64> = z.iter().map(|x| (x - lse).exp()).collect();
        let grad = match self {
            Policy::Tabular(_) => {
                let mut g = Table::default();
                for (i, r) in set.iter().enumerate() {
                    let indicator = if i == idx { 1.0 } else { 0.0 };
                    g.add(ResponseKey::new(prompt_id, &r.id), indicator - probs[i]);
                }
                Gradient::Sparse(g)
            }
            Policy::LogLinear(l) => {
                let mut g = set[idx].features.clone().unwrap_or_default();
                for (r, p) in set.iter().zip(&probs) {
                    for (gi, fi) in g.iter_mut().zip(r.features.as_deref().unwrap_or(&[])) {
                        *gi -= p * fi;
                    }
                }
                debug_assert_eq!(g.len(), l.weights.len());
                Gradient::Dense(g)
            }
        };
        Ok((z[idx] - lse, grad))
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_> {
        match self {
            Policy::Tabular(t) => ParamsMut::Table(&mut t.logits),
            Policy::LogLinear(l) => ParamsMut::Dense(&mut l.weights),
        }
    }
}

/// A frozen policy. Only read access is exposed, so training cannot alter it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePolicy(Policy);

impl ReferencePolicy {
    /// Freezes a snapshot of `policy`.
    pub fn frozen(policy: &Policy) -> Self {
        Self(policy.clone())
    }

    /// Uniform over each prompt's candidates (all logits zero).
    pub fn uniform(candidates: CandidateSets) -> Self {
        Self(Policy::tabular(candidates))
    }

    pub fn policy(&self) -> &Policy {
        &self.0
    }

    pub fn log_prob(&self, prompt_id: &str, response_id: &str) -> Result<f64, ScorerError> {
        self.0.log_prob(prompt_id, response_id)
    }

    /// Canonical serialization, for freeze checks.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&self.0).unwrap_or_default()
    }
}

/// `β·(log π_θ(y) − log π_ref(y))` for one response, with its gradient on the policy parameters.
pub fn implicit_reward_of(
    policy: &Policy,
    reference: &ReferencePolicy,
    prompt_id: &str,
    response_id: &str,
    beta: f64,
) -> Result<(f64, Gradient), ScorerError> {
    let (lp, mut g) = policy.log_prob_with_grad(prompt_id, response_id)?;
    let lr = reference.log_prob(prompt_id, response_id)?;
    g.scale(beta);
    Ok((beta * (lp - lr), g))
}

/// Implicit-reward difference `d` between chosen and rejected, with `∂d/∂θ`.
pub fn implicit_reward(
    policy: &Policy,
    reference: &ReferencePolicy,
    pair: &PreferencePair,
    beta: f64,
) -> Result<(f64, Gradient), ScorerError> {
    let (rw, mut g) = implicit_reward_of(policy, reference, &pair.prompt_id, &pair.chosen.id, beta)?;
    let (rl, gl) = implicit_reward_of(policy, reference, &pair.prompt_id, &pair.rejected.id, beta)?;
    g.add_scaled(&gl, -1.0);
    Ok((rw - rl, g))
}

/// Any trainable scorer, with the frozen reference bundled for policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Reward(RewardModel),
    Policy { policy: Policy, reference: ReferencePolicy },
}

impl Model {
    /// Zero-initialized scorer of `kind`. Policies take their candidate sets
    /// from `pairs` (pass every split that will be scored) and use a uniform
    /// reference.
    pub fn new<'a>(
        kind: ScorerKind,
        feature_dim: usize,
        pairs: impl IntoIterator<Item = &'a PreferencePair>,
    ) -> Result<Self, ScorerError> {
        Ok(match kind {
            ScorerKind::TabularReward => Model::Reward(RewardModel::Tabular(TabularReward::default())),
            ScorerKind::LinearReward => Model::Reward(RewardModel::Linear(LinearReward::new(feature_dim))),
            ScorerKind::TabularPolicy | ScorerKind::LogLinearPolicy => {
                let candidates = CandidateSets::from_pairs(pairs);
                let policy = if kind == ScorerKind::TabularPolicy {
                    Policy::tabular(candidates)
                } else {
                    Policy::log_linear(feature_dim, candidates)?
                };
                let reference = ReferencePolicy::frozen(&policy);
                Model::Policy { policy, reference }
            }
        })
    }

    pub fn kind(&self) -> ScorerKind {
        match self {
            Model::Reward(RewardModel::Tabular(_)) => ScorerKind::TabularReward,
            Model::Reward(RewardModel::Linear(_)) => ScorerKind::LinearReward,
            Model::Policy { policy: Policy::Tabular(_), .. } => ScorerKind::TabularPolicy,
            Model::Policy { policy: Policy::LogLinear(_), .. } => ScorerKind::LogLinearPolicy,
        }
    }

    /// Dense parameter dimension, if any.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Model::Reward(RewardModel::Linear(l)) => Some(l.weights.len()),
            Model::Policy { policy: Policy::LogLinear(l), .. } => Some(l.weights.len()),
            _ => None,
        }
    }

    /// Score difference `d` and its parameter gradient. `beta` only affects policies.
    pub fn pair_difference(&self, pair: &PreferencePair, beta: f64) -> Result<(f64, Gradient), ScorerError> {
        match self {
            Model::Reward(r) => score_pair(r, pair),
            Model::Policy { policy, reference } => implicit_reward(policy, reference, pair, beta),
        }
    }

    /// Score of a single response: the reward, or the implicit reward for policies.
    pub fn response_score(&self, prompt_id: &str, response: &ResponseRef, beta: f64) -> Result<f64, ScorerError> {
        match self {
            Model::Reward(r) => r.reward(prompt_id, response),
            Model::Policy { policy, reference } => {
                Ok(beta * (policy.log_prob(prompt_id, &response.id)? - reference.log_prob(prompt_id, &response.id)?))
            }
        }
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_> {
        match self {
            Model::Reward(RewardModel::Tabular(t)) => ParamsMut::Table(&mut t.params),
            Model::Reward(RewardModel::Linear(l)) => ParamsMut::Dense(&mut l.weights),
            Model::Policy { policy, .. } => policy.params_mut(),
        }
    }

    /// Adds candidate sets for prompts the policy has never seen, so held-out
    /// pairs can be scored. Prompts already known are left untouched; this keeps
    /// every existing distribution, including the reference's, unchanged.
    /// Returns the number of prompts added. No-op for reward models.
    pub fn extend_candidates(&mut self, mut fresh: CandidateSets) -> Result<usize, ScorerError> {
        let Model::Policy { policy, reference } = self else {
            return Ok(0);
        };
        let known = &policy.candidates().0;
        fresh.0.retain(|prompt, _| !known.contains_key(prompt));
        if let Policy::LogLinear(l) = &*policy {
            for r in fresh.0.values().flatten() {
                let phi = features_of(r)?;
                if phi.len() != l.weights.len() {
                    return Err(ScorerError::DimensionMismatch { expected: l.weights.len(), got: phi.len() });
                }
            }
        }
        let added = fresh.0.len();
        for target in [policy, &mut reference.0] {
            let sets = match target {
                Policy::Tabular(t) => &mut t.candidates,
                Policy::LogLinear(l) => &mut l.candidates,
            };
            sets.0.extend(fresh.0.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Ok(added)
    }

    pub fn reference(&self) -> Option<&ReferencePolicy> {
        match self {
            Model::Policy { reference, .. } => Some(reference),
            Model::Reward(_) => None,
        }
    }
}

/// Serialized scorer plus the optimizer state and run settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub model: Model,
    pub optimizer: OptimizerState,
    pub seed: u64,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: Model, optimizer: OptimizerState, seed: u64, config: serde_json::Value) -> Self {
        Self { kind: model.kind(), dimension: model.dimension(), model, optimizer, seed, config }
    }
}
