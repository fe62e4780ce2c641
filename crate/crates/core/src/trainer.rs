//! Seeded minibatch training for any scorer/loss pairing, with per-epoch
//! validation metrics.

use serde::{Deserialize, Serialize};

use crate::eval::{accuracy_from_differences, calibration_from_differences, differences, EvalError};
use crate::feedback_data::{BinaryFeedbackRecord, DatasetSplit};
use crate::losses::{kto_weight, kto_weighted_loss, median, soft_bce, LossConfig, LossError, LossKind};
use crate::scorers::{implicit_reward_of, update_params, Gradient, Model, Optimizer, OptimizerState, ScorerError};
use crate::seeds;

use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("incompatible scorer and loss: {0}")]
    Incompatible(String),
    #[error("training split is empty")]
    EmptyTrain,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStop {
    #[default]
    ValidationAccuracy,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub early_stop_on: EarlyStop,
    /// Linear decay of the learning rate to zero over `max_epochs`.
    pub lr_decay: bool,
    pub ece_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            optimizer: Optimizer::adam(),
            lr: 1e-2,
            batch_size: 32,
            max_epochs: 3,
            seed: 0,
            early_stop_on: EarlyStop::ValidationAccuracy,
            lr_decay: false,
            ece_bins: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.loss.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.ece_bins == 0 {
            return Err(TrainError::InvalidConfig("batch_size, max_epochs and ece_bins must be >= 1".into()));
        }
        Ok(())
    }

    fn epoch_lr(&self, epoch: usize) -> f64 {
        if self.lr_decay {
            self.lr * (1.0 - (epoch - 1) as f64 / self.max_epochs as f64)
        } else {
            self.lr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    /// Mean score difference `d` over validation pairs.
    pub val_mean_margin: Option<f64>,
    pub val_ece: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: OptimizerState,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

fn check_compatible(kind: LossKind, model: &Model) -> Result<(), TrainError> {
    if kind.is_policy_loss() != model.kind().is_policy() {
        return Err(TrainError::Incompatible(format!(
            "loss {kind:?} needs a {} scorer, got {:?}",
            if kind.is_policy_loss() { "policy" } else { "reward" },
            model.kind()
        )));
    }
    Ok(())
}

/// Trains `model` on `split.train`, recording validation metrics after each
/// epoch. With early stopping on validation accuracy the parameters of the
/// best epoch (earliest on ties) are returned.
pub fn train(config: &TrainConfig, mut model: Model, split: &DatasetSplit) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_compatible(config.loss.kind, &model)?;
    if config.loss.kind == LossKind::KtoWeighted {
        return Err(TrainError::Incompatible("kto_weighted trains on binary feedback; use train_kto".into()));
    }
    let pairs = &split.train;
    if pairs.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let beta = config.loss.beta;
    let targets: Vec<f64> = pairs.iter().map(|p| config.loss.target_for(p)).collect::<Result<_, _>>()?;

    let mut state = OptimizerState::default();
    let mut metrics = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, usize, Model, OptimizerState)> = None;
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seeds::stream(config.seed, seeds::SHUFFLE + epoch as u64));
        let lr = config.epoch_lr(epoch);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut grad: Option<Gradient> = None;
            for &i in chunk {
                let (d, g) = model.pair_difference(&pairs[i], beta)?;
                let loss = soft_bce(d, targets[i]).map_err(|e| match e {
                    LossError::NonFinite(_) => TrainError::NonFiniteLoss { epoch, batch },
                    other => other.into(),
                })?;
                if !loss.value.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch });
                }
                loss_sum += loss.value;
                grad.get_or_insert_with(|| g.zeros_like()).add_scaled(&g, loss.grad_d * scale);
            }
            if let Some(g) = grad {
                update_params(model.params_mut(), &g, &mut state, &config.optimizer, lr)?;
            }
        }

        let mut m = EpochMetrics {
            epoch,
            train_loss: loss_sum / pairs.len() as f64,
            val_accuracy: None,
            val_mean_margin: None,
            val_ece: None,
        };
        if !split.validation.is_empty() {
            let ds = differences(&model, &split.validation, beta)?;
            let acc = accuracy_from_differences(&ds)?;
            m.val_accuracy = Some(acc);
            m.val_mean_margin = Some(ds.iter().sum::<f64>() / ds.len() as f64);
            m.val_ece = Some(calibration_from_differences(&ds, config.ece_bins)?.0);
            if config.early_stop_on == EarlyStop::ValidationAccuracy && best.as_ref().is_none_or(|(b, ..)| acc > *b) {
                best = Some((acc, epoch, model.clone(), state.clone()));
            }
        }
        metrics.push(m);
    }

    Ok(match best {
        Some((_, best_epoch, model, optimizer)) => TrainOutcome { model, optimizer, metrics, best_epoch },
        None => TrainOutcome { model, optimizer: state, metrics, best_epoch: config.max_epochs },
    })
}

/// Trains a policy on single-response feedback with per-sample weights
/// `σ(γ·(score − median))` for desirable responses and `1 − σ(…)` for
/// undesirable ones. No validation metrics are recorded.
pub fn train_kto(
    config: &TrainConfig,
    mut model: Model,
    records: &[BinaryFeedbackRecord],
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if config.loss.kind != LossKind::KtoWeighted {
        return Err(TrainError::Incompatible(format!("train_kto needs kto_weighted, got {:?}", config.loss.kind)));
    }
    check_compatible(config.loss.kind, &model)?;
    if records.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let mid = median(&scores).unwrap_or(0.0);
    let weights: Vec<f64> = records
        .iter()
        .map(|r| {
            let w = kto_weight(r.score, mid, config.loss.gamma);
            match r.label {
                crate::BinaryLabel::Desirable => w,
                crate::BinaryLabel::Undesirable => 1.0 - w,
            }
        })
        .collect();

    let beta = config.loss.beta;
    let mut state = OptimizerState::default();
    let mut metrics = Vec::new();
    let mut order: Vec<usize> = (0..records.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seeds::stream(config.seed, seeds::SHUFFLE + epoch as u64));
        let lr = config.epoch_lr(epoch);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut grad: Option<Gradient> = None;
            for &i in chunk {
                let r = &records[i];
                let Model::Policy { policy, reference } = &model else { unreachable!("checked above") };
                let (d, g) = implicit_reward_of(policy, reference, &r.prompt_id, &r.response, beta)?;
                let loss = kto_weighted_loss(d, r.label, weights[i])?;
                if !loss.value.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, batch });
                }
                loss_sum += loss.value;
                grad.get_or_insert_with(|| g.zeros_like()).add_scaled(&g, loss.grad_d * scale);
            }
            if let Some(g) = grad {
                update_params(model.params_mut(), &g, &mut state, &config.optimizer, lr)?;
            }
        }
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / records.len() as f64,
            val_accuracy: None,
            val_mean_margin: None,
            val_ece: None,
        });
    }
    Ok(TrainOutcome { model, optimizer: state, metrics, best_epoch: config.max_epochs })
}

/// `(epoch, val_mean_margin)` rows in epoch order.
pub fn margin_trajectory(metrics: &[EpochMetrics]) -> Vec<(usize, Option<f64>)> {
    let mut rows: Vec<_> = metrics.iter().map(|m| (m.epoch, m.val_mean_margin)).collect();
    rows.sort_by_key(|r| r.0);
    rows
}

/// CSV with header `epoch,val_mean_margin`; missing values are empty cells.
pub fn trajectory_csv(rows: &[(usize, Option<f64>)]) -> String {
    let mut s = String::from("epoch,val_mean_margin\n");
    for (e, m) in rows {
        match m {
            Some(m) => s.push_str(&format!("{e},{m}\n")),
            None => s.push_str(&format!("{e},\n")),
        }
    }
    s
}

/// One JSON object per line.
pub fn metrics_jsonl(metrics: &[EpochMetrics]) -> String {
    metrics.iter().map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback_data::{BinaryLabel, PreferencePair, ResponseRef};
    use crate::scorers::ScorerKind;

    fn one_pair(margin: f64) -> DatasetSplit {
        let p = PreferencePair::new(0, "p", ResponseRef::new("w"), ResponseRef::new("l"), margin, 0.0);
        DatasetSplit { train: vec![p.clone()], validation: vec![p], test: vec![], seed: 0 }
    }

    fn cfg(kind: LossKind, epochs: usize) -> TrainConfig {
        TrainConfig {
            loss: LossConfig { kind, gamma: 1.0, beta: 1.0, ..Default::default() },
            optimizer: Optimizer::Sgd,
            lr: 1.0,
            batch_size: 1,
            max_epochs: epochs,
            early_stop_on: EarlyStop::None,
            ..Default::default()
        }
    }

    #[test]
    fn soft_target_converges_to_margin() {
        let split = one_pair(2.0);
        let model = Model::new(ScorerKind::TabularReward, 0, &split.train).unwrap();
        let out = train(&cfg(LossKind::RmSoft, 200), model, &split).unwrap();
        let d = out.model.pair_difference(&split.train[0], 1.0).unwrap().0;
        assert!((d - 2.0).abs() < 1e-9, "d = {d}");
    }

    #[test]
    fn incompatible_pairs_fail_before_training() {
        let split = one_pair(1.0);
        let reward = Model::new(ScorerKind::TabularReward, 0, &split.train).unwrap();
        assert!(matches!(train(&cfg(LossKind::Dpo, 1), reward, &split), Err(TrainError::Incompatible(_))));
        let policy = Model::new(ScorerKind::TabularPolicy, 0, &split.train).unwrap();
        assert!(matches!(train(&cfg(LossKind::RmHard, 1), policy.clone(), &split), Err(TrainError::Incompatible(_))));
        assert!(train(&cfg(LossKind::KtoWeighted, 1), policy, &split).is_err());
        let empty = DatasetSplit::default();
        let reward = Model::new(ScorerKind::TabularReward, 0, &split.train).unwrap();
        assert!(matches!(train(&cfg(LossKind::RmHard, 1), reward, &empty), Err(TrainError::EmptyTrain)));
    }

    #[test]
    fn early_stop_keeps_best_epoch() {
        // validation pair is the reverse of the training pair, so accuracy peaks before any update
        let p = PreferencePair::new(0, "p", ResponseRef::new("w"), ResponseRef::new("l"), 1.0, 0.0);
        let mut rev = p.clone();
        std::mem::swap(&mut rev.chosen, &mut rev.rejected);
        let mut other = p.clone();
        other.prompt_id = "q".into();
        let split =
            DatasetSplit { train: vec![p.clone(), rev.clone()], validation: vec![p, other], test: vec![], seed: 0 };
        let mut c = cfg(LossKind::RmSoft, 4);
        c.early_stop_on = EarlyStop::ValidationAccuracy;
        let model = Model::new(ScorerKind::TabularReward, 0, &split.train).unwrap();
        let out = train(&c, model, &split).unwrap();
        let best_acc = out.metrics.iter().map(|m| m.val_accuracy.unwrap()).fold(f64::MIN, f64::max);
        let first_best = out.metrics.iter().find(|m| m.val_accuracy == Some(best_acc)).unwrap().epoch;
        assert_eq!(out.best_epoch, first_best);
    }

    #[test]
    fn kto_moves_desirable_up() {
        let records = vec![
            BinaryFeedbackRecord {
                prompt_id: "p".into(),
                response: "good".into(),
                label: BinaryLabel::Desirable,
                score: 9.0,
            },
            BinaryFeedbackRecord {
                prompt_id: "p".into(),
                response: "bad".into(),
                label: BinaryLabel::Undesirable,
                score: 2.0,
            },
        ];
        let pair = PreferencePair::new(0, "p", ResponseRef::new("good"), ResponseRef::new("bad"), 7.0, 0.0);
        let model = Model::new(ScorerKind::TabularPolicy, 0, [&pair]).unwrap();
        let mut c = cfg(LossKind::KtoWeighted, 20);
        c.lr = 0.5;
        let out = train_kto(&c, model, &records).unwrap();
        assert!(out.model.pair_difference(&pair, 1.0).unwrap().0 > 0.0);
        assert!(out.metrics.last().unwrap().train_loss < out.metrics[0].train_loss);
    }

    #[test]
    fn trajectory_rows() {
        let split = one_pair(1.0);
        let model = Model::new(ScorerKind::TabularReward, 0, &split.train).unwrap();
        let out = train(&cfg(LossKind::RmHard, 3), model, &split).unwrap();
        let rows = margin_trajectory(&out.metrics);
        assert_eq!(rows.len(), 3);
        assert!(trajectory_csv(&rows).starts_with("epoch,val_mean_margin\n1,"));
        assert_eq!(metrics_jsonl(&out.metrics).lines().count(), 3);
    }
}
