//! Experiment configuration: JSON file, optional preset, command-line overrides.
//!
//! Resolution order is built-in defaults, then the named preset, then the
//! config file, then flags. The fully resolved config is echoed into every
//! output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mmpo::feedback_data::{Orientation, SynthSpec};
use mmpo::scorers::{Optimizer, ScorerKind};
use mmpo::trainer::{EarlyStop, TrainConfig};
use mmpo::LossConfig;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MMPO_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub loss: LossConfig,
    pub scorer: ScorerConfig,
    pub trainer: TrainerSettings,
    pub eval: EvalSettings,
    pub synth: SynthSpec,
    pub curve: CurveSettings,
    /// Threads for pair scoring during evaluation. Output does not depend on it.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: None,
            output_dir: None,
            data: DataConfig::default(),
            loss: LossConfig::default(),
            scorer: ScorerConfig::default(),
            trainer: TrainerSettings::default(),
            eval: EvalSettings::default(),
            synth: SynthSpec::default(),
            curve: CurveSettings::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    /// Orientation for training and validation files.
    pub orientation: Orientation,
    /// Orientation for files being evaluated.
    pub eval_orientation: Orientation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub target_size: usize,
    #[serde(default = "default_cap")]
    pub per_prompt_cap: usize,
}

fn default_cap() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub feature_dim: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { kind: ScorerKind::LogLinearPolicy, feature_dim: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSettings {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_on: EarlyStop,
    pub lr_decay: bool,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            optimizer: t.optimizer,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            early_stop_on: t.early_stop_on,
            lr_decay: t.lr_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub bins: usize,
    pub best_of_n: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_weights: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { bins: 10, best_of_n: vec![1, 2, 4, 8, 16], category_weights: None, checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSettings {
    pub gammas: Vec<f64>,
    pub m_min: f64,
    pub m_max: f64,
    pub step: f64,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self { gammas: vec![0.25, 0.5, 1.0, 2.0], m_min: 0.0, m_max: 10.0, step: 0.5 }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            optimizer: self.trainer.optimizer,
            lr: self.trainer.lr,
            batch_size: self.trainer.batch_size,
            max_epochs: self.trainer.max_epochs,
            seed: self.seed,
            early_stop_on: self.trainer.early_stop_on,
            lr_decay: self.trainer.lr_decay,
            ece_bins: self.eval.bins,
        }
    }

    /// The parts of the config that determine a trained model; stored in checkpoints.
    pub fn model_echo(&self) -> Value {
        serde_json::json!({
            "seed": self.seed,
            "loss": self.loss,
            "scorer": self.scorer,
            "trainer": self.trainer,
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("mmpo-out"))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.train_config().validate().map_err(|e| format!("loss/trainer: {e}"))?;
        if self.workers == 0 {
            return Err("workers: must be >= 1".into());
        }
        if self.eval.bins == 0 {
            return Err("eval.bins: must be >= 1".into());
        }
        if self.eval.best_of_n.contains(&0) {
            return Err("eval.best_of_n: entries must be >= 1".into());
        }
        if let Some(s) = &self.data.sampler {
            if s.target_size < 4 || s.per_prompt_cap == 0 {
                return Err("data.sampler: target_size must be >= 4 and per_prompt_cap >= 1".into());
            }
        }
        if let Some(w) = &self.eval.category_weights {
            if let Some((k, v)) = w.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(format!("eval.category_weights.{k}: weight must be >= 0, got {v}"));
            }
        }
        if self.scorer.feature_dim == 0
            && matches!(self.scorer.kind, ScorerKind::LinearReward | ScorerKind::LogLinearPolicy)
        {
            return Err("scorer.feature_dim: must be >= 1 for linear scorers".into());
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn preset_patch(name: &str) -> Result<Value, String> {
    let p = mmpo::presets::find(name).ok_or_else(|| {
        let names: Vec<&str> = mmpo::presets::PRESETS.iter().map(|p| p.name).collect();
        format!("preset: unknown preset {name:?} (known: {})", names.join(", "))
    })?;
    let t = p.train_config();
    Ok(serde_json::json!({
        "preset": name,
        "loss": { "kind": t.loss.kind, "beta": t.loss.beta, "gamma": t.loss.gamma },
        "trainer": { "max_epochs": t.max_epochs, "early_stop_on": t.early_stop_on },
        "scorer": { "kind": if t.loss.kind.is_policy_loss() { "log-linear-policy" } else { "linear-reward" } },
    }))
}

/// Defaults → preset → file.
pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig, String> {
    let file: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))?
        }
        None => Value::Object(Default::default()),
    };
    if !file.is_object() {
        return Err("config: top level must be a JSON object".into());
    }
    let mut resolved = serde_json::to_value(ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let preset = preset.map(str::to_string).or_else(|| file.get("preset").and_then(Value::as_str).map(str::to_string));
    if let Some(name) = &preset {
        merge(&mut resolved, preset_patch(name)?);
    }
    merge(&mut resolved, file);
    if let Some(name) = preset {
        resolved["preset"] = Value::String(name);
    }
    serde_json::from_value(resolved).map_err(|e| format!("config: {e}"))
}
