//! Browser bindings for three interactive views: the soft preference target,
//! margin-matched vs hard-target calibration, and best-of-n selection.
//!
//! Each export takes plain numbers and returns a JSON string; the page in
//! `www/` draws it. The computations live in ordinary functions so they can
//! be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mmpo::bt_target::preference_curve;
use mmpo::eval::{best_of_n_curve, evaluate, Candidate, CandidatePool, ReliabilityBin};
use mmpo::feedback_data::{generate_synthetic_bt, orient_by_score, SplitFractions, SynthSpec};
use mmpo::trainer::{train, EarlyStop};
use mmpo::{DatasetSplit, LossConfig, LossKind, Model, ResponseRef, ScorerKind, TrainConfig};

#[derive(Debug, Serialize)]
pub struct CurveSeries {
    pub gamma: f64,
    pub margins: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// `σ(γm)` over `[0, m_max]` for each γ.
pub fn curve_series(gammas: &[f64], m_max: f64, step: f64) -> Result<Vec<CurveSeries>, String> {
    let points = preference_curve(gammas, 0.0, m_max, step).map_err(|e| e.to_string())?;
    let mut out: Vec<CurveSeries> = Vec::new();
    for p in points {
        match out.last_mut() {
            Some(s) if s.gamma == p.gamma => {
                s.margins.push(p.margin);
                s.probabilities.push(p.probability);
            }
            _ => out.push(CurveSeries { gamma: p.gamma, margins: vec![p.margin], probabilities: vec![p.probability] }),
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct CalibrationRun {
    pub loss: &'static str,
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
    /// Mean validation score difference after each epoch.
    pub margin_trajectory: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CalibrationDemo {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub runs: Vec<CalibrationRun>,
}

/// Trains a log-linear policy with margin-matched and with hard targets on the
/// same synthetic corpus and reports held-out calibration for both.
pub fn calibration_demo(seed: u64, n_prompts: usize, epochs: usize, gamma: f64) -> Result<CalibrationDemo, String> {
    let beta = 0.1;
    let spec = SynthSpec { n_prompts, seed, fractions: SplitFractions::new(0.7, 0.1, 0.2), ..Default::default() };
    let data = generate_synthetic_bt(&spec).map_err(|e| e.to_string())?;
    let split = DatasetSplit {
        train: orient_by_score(&data.split.train),
        validation: orient_by_score(&data.split.validation),
        test: data.split.test,
        seed,
    };
    let mut runs = Vec::new();
    for (name, kind) in [("margin-matched", LossKind::Mmpo), ("hard target", LossKind::Dpo)] {
        let cfg = TrainConfig {
            loss: LossConfig { kind, beta, gamma, ..Default::default() },
            lr: 0.05,
            max_epochs: epochs,
            seed,
            early_stop_on: EarlyStop::None,
            ..Default::default()
        };
        let model =
            Model::new(ScorerKind::LogLinearPolicy, spec.feature_dim, split.all()).map_err(|e| e.to_string())?;
        let out = train(&cfg, model, &split).map_err(|e| e.to_string())?;
        let report = evaluate(&out.model, &split.test, beta, 10, None).map_err(|e| e.to_string())?;
        runs.push(CalibrationRun {
            loss: name,
            accuracy: report.accuracy,
            ece: report.ece,
            bins: report.bins,
            margin_trajectory: out.metrics.iter().filter_map(|m| m.val_mean_margin).collect(),
        });
    }
    Ok(CalibrationDemo { train_pairs: split.train.len(), test_pairs: split.test.len(), runs })
}

#[derive(Debug, Serialize)]
pub struct BestOfNDemo {
    pub ns: Vec<usize>,
    /// Name and mean selected true reward per `n`.
    pub series: Vec<(String, Vec<f64>)>,
}

/// Best-of-n curves for reward models trained with soft and hard targets on a
/// small noisy corpus, plus the true-reward oracle.
pub fn best_of_n_demo(seed: u64, noise_dims: usize, epochs: usize) -> Result<BestOfNDemo, String> {
    let dim = noise_dims + 1;
    let spec = SynthSpec {
        n_prompts: 40,
        seed,
        feature_dim: dim,
        feature_noise: 1.0,
        fractions: SplitFractions::new(0.9, 0.1, 0.0),
        ..Default::default()
    };
    let split = generate_synthetic_bt(&spec).map_err(|e| e.to_string())?.split;
    let pool_spec = SynthSpec {
        n_prompts: 100,
        k_responses: 64,
        pairs_per_prompt: Some(1),
        seed: seed + 1000,
        fractions: SplitFractions::new(1.0, 0.0, 0.0),
        ..spec.clone()
    };
    let truth = generate_synthetic_bt(&pool_spec).map_err(|e| e.to_string())?.truth;
    let pools: Vec<CandidatePool> = truth
        .prompts
        .iter()
        .map(|p| CandidatePool {
            prompt_id: p.prompt_id.clone(),
            candidates: p
                .responses
                .iter()
                .map(|r| Candidate {
                    response: ResponseRef::new(r.id.clone()).with_features(r.features.clone()),
                    quality: r.reward,
                })
                .collect(),
        })
        .collect();
    let ns: Vec<usize> = vec![1, 2, 4, 8, 16, 32, 64];
    let mut series = Vec::new();
    for (name, kind) in [("margin-matched", LossKind::RmSoft), ("hard target", LossKind::RmHard)] {
        let cfg = TrainConfig {
            loss: LossConfig { kind, gamma: 1.0, ..Default::default() },
            lr: 0.05,
            batch_size: 16,
            max_epochs: epochs,
            seed,
            early_stop_on: EarlyStop::None,
            ..Default::default()
        };
        let model = Model::new(ScorerKind::LinearReward, dim, split.all()).map_err(|e| e.to_string())?;
        let out = train(&cfg, model, &split).map_err(|e| e.to_string())?;
        let curve =
            best_of_n_curve(&pools, &ns, |p, r| out.model.response_score(p, r, 1.0)).map_err(|e| e.to_string())?;
        series.push((name.to_string(), curve.into_iter().map(|(_, q)| q).collect()));
    }
    let oracle = best_of_n_curve(&pools, &ns, |p, r| {
        let pool = pools.iter().find(|x| x.prompt_id == p).expect("pool exists");
        Ok::<f64, mmpo::eval::EvalError>(
            pool.candidates.iter().find(|c| c.response.id == r.id).map_or(0.0, |c| c.quality),
        )
    })
    .map_err(|e| e.to_string())?;
    series.push(("true reward".into(), oracle.into_iter().map(|(_, q)| q).collect()));
    Ok(BestOfNDemo { ns, series })
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON list of `{gamma, margins, probabilities}`.
#[wasm_bindgen(js_name = preferenceCurve)]
pub fn preference_curve_js(gammas: &[f64], m_max: f64, step: f64) -> Result<String, JsError> {
    to_js(curve_series(gammas, m_max, step))
}

#[wasm_bindgen(js_name = calibrationDemo)]
pub fn calibration_demo_js(seed: u32, n_prompts: u32, epochs: u32, gamma: f64) -> Result<String, JsError> {
    to_js(calibration_demo(u64::from(seed), n_prompts as usize, epochs as usize, gamma))
}

#[wasm_bindgen(js_name = bestOfNDemo)]
pub fn best_of_n_demo_js(seed: u32, noise_dims: u32, epochs: u32) -> Result<String, JsError> {
    to_js(best_of_n_demo(u64::from(seed), noise_dims as usize, epochs as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_groups_by_gamma() {
        let s = curve_series(&[0.0, 1.0], 2.0, 1.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].probabilities, vec![0.5, 0.5, 0.5]);
        assert_eq!(s[1].margins, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn calibration_demo_reports_both_losses() {
        let d = calibration_demo(0, 80, 3, 1.0).unwrap();
        assert_eq!(d.runs.len(), 2);
        assert!(d.runs.iter().all(|r| r.margin_trajectory.len() == 3 && (0.0..=1.0).contains(&r.ece)));
    }

    #[test]
    fn best_of_n_oracle_is_monotone() {
        let d = best_of_n_demo(0, 3, 5).unwrap();
        let oracle = &d.series.last().unwrap().1;
        assert!(oracle.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(d.series.len(), 3);
    }

    #[test]
    fn bad_input_is_an_error_not_a_panic() {
        assert!(curve_series(&[-1.0], 2.0, 1.0).is_err());
        assert!(calibration_demo(0, 0, 3, 1.0).is_err());
    }
}
