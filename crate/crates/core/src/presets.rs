//! Named hyperparameter presets for the settings reported for full-scale runs.
//! Only the scale-free values (β, γ, epoch budget) carry over; learning rates
//! are desk-scale defaults.

use crate::losses::{LossConfig, LossKind};
use crate::scorers::Optimizer;
use crate::trainer::{EarlyStop, TrainConfig};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub kind: LossKind,
    pub beta: f64,
    pub gamma: f64,
    pub max_epochs: usize,
}

#[rustfmt::skip]
pub const PRESETS: &[Preset] = &[
    Preset { name: "judge-2b", description: "policy, judge scores 1-10, small model", kind: LossKind::Mmpo, beta: 0.01, gamma: 2.2, max_epochs: 3 },
    Preset { name: "judge-7b", description: "policy, judge scores 1-10, large model", kind: LossKind::Mmpo, beta: 0.01, gamma: 1.1, max_epochs: 3 },
    Preset { name: "votes-2b", description: "policy, net vote differences, small model", kind: LossKind::Mmpo, beta: 0.01, gamma: 0.15, max_epochs: 3 },
    Preset { name: "votes-7b", description: "policy, net vote differences, large model", kind: LossKind::Mmpo, beta: 0.01, gamma: 0.3, max_epochs: 3 },
    Preset { name: "reward-2b", description: "reward model, small", kind: LossKind::RmSoft, beta: 0.01, gamma: 0.5, max_epochs: 3 },
    Preset { name: "reward-7b", description: "reward model, large", kind: LossKind::RmSoft, beta: 0.01, gamma: 0.5, max_epochs: 2 },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: LossConfig { kind: self.kind, beta: self.beta, gamma: self.gamma, ..LossConfig::default() },
            optimizer: Optimizer::adam(),
            max_epochs: self.max_epochs,
            early_stop_on: EarlyStop::ValidationAccuracy,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        assert_eq!(find("judge-7b").unwrap().gamma, 1.1);
        assert_eq!(find("votes-7b").unwrap().gamma, 0.3);
        assert_eq!(find("reward-2b").unwrap().train_config().loss.gamma, 0.5);
        assert_eq!(find("judge-2b").unwrap().train_config().loss.beta, 0.01);
        assert!(find("nope").is_none());
    }
}
