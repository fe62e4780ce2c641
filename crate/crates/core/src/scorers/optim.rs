//! SGD and Adam over tabular or dense parameters.

use serde::{Deserialize, Serialize};

use super::params::{Gradient, ParamsMut, ResponseKey, Table};
use super::ScorerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moments {
    Table { first: Table, second: Table },
    Dense { first: Vec<f64>, second: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Moments>,
}

/// One Adam update at step `t` (1-based).
#[derive(Clone, Copy)]
struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
}

impl AdamStep {
    fn apply(self, theta: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / (1.0 - self.beta1.powi(self.t));
        let v_hat = *v / (1.0 - self.beta2.powi(self.t));
        *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

/// Applies one descent step. The gradient is checked for finiteness before
/// anything is mutated.
pub fn update_params(
    mut params: ParamsMut<'_>,
    grad: &Gradient,
    state: &mut OptimizerState,
    optimizer: &Optimizer,
    lr: f64,
) -> Result<(), ScorerError> {
    if let Some((name, g)) = grad.iter().find(|(_, g)| !g.is_finite()) {
        return Err(ScorerError::NonFiniteGradient { parameter: name, value: g });
    }
    if let (ParamsMut::Dense(w), Gradient::Dense(g)) = (&params, grad) {
        if w.len() != g.len() {
            return Err(ScorerError::DimensionMismatch { expected: w.len(), got: g.len() });
        }
    }
    state.step += 1;
    match *optimizer {
        Optimizer::Sgd => params.axpy(grad, -lr),
        Optimizer::Adam { beta1, beta2, eps } => {
            let t = i32::try_from(state.step).unwrap_or(i32::MAX);
            let step = AdamStep { lr, beta1, beta2, eps, t };
            match (&mut params, grad) {
                (ParamsMut::Table(theta), Gradient::Sparse(g)) => {
                    let moments = state
                        .moments
                        .get_or_insert_with(|| Moments::Table { first: Table::default(), second: Table::default() });
                    let Moments::Table { first, second } = moments else {
                        return Err(ScorerError::Incompatible("dense optimizer state on a tabular scorer".into()));
                    };
                    let mut keys: Vec<ResponseKey> = first.0.keys().cloned().collect();
                    keys.extend(g.0.keys().filter(|k| !first.0.contains_key(*k)).cloned());
                    keys.sort();
                    for k in keys {
                        let gk = g.get(&k);
                        let (mut m, mut v) = (first.get(&k), second.get(&k));
                        step.apply(theta.entry(k.clone()), gk, &mut m, &mut v);
                        *first.entry(k.clone()) = m;
                        *second.entry(k) = v;
                    }
                }
                (ParamsMut::Dense(w), Gradient::Dense(g)) => {
                    let n = w.len();
                    let moments = state
                        .moments
                        .get_or_insert_with(|| Moments::Dense { first: vec![0.0; n], second: vec![0.0; n] });
                    let Moments::Dense { first, second } = moments else {
                        return Err(ScorerError::Incompatible("tabular optimizer state on a dense scorer".into()));
                    };
                    for i in 0..n {
                        step.apply(&mut w[i], g[i], &mut first[i], &mut second[i]);
                    }
                }
                _ => return Err(ScorerError::Incompatible("gradient shape does not match parameters".into())),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> ResponseKey {
        ResponseKey::new("p", "r")
    }

    fn sparse(g: f64) -> Gradient {
        let mut t = Table::default();
        t.add(key(), g);
        Gradient::Sparse(t)
    }

    #[test]
    fn sgd_step() {
        let mut table = Table::default();
        let mut state = OptimizerState::default();
        update_params(ParamsMut::Table(&mut table), &sparse(1.0), &mut state, &Optimizer::Sgd, 0.1).unwrap();
        assert!((table.get(&key()) + 0.1).abs() < 1e-15);
        update_params(ParamsMut::Table(&mut table), &sparse(0.0), &mut state, &Optimizer::Sgd, 0.1).unwrap();
        assert!((table.get(&key()) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_scale_free() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε) ≈ lr·sign(g).
        for g in [1e-3, 0.5, 250.0, -7.0] {
            let mut w = vec![0.0];
            let mut state = OptimizerState::default();
            update_params(ParamsMut::Dense(&mut w), &Gradient::Dense(vec![g]), &mut state, &Optimizer::adam(), 0.01)
                .unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((w[0] - expected).abs() < 1e-15, "g={g}");
            assert!((w[0].abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn nonfinite_gradient_is_rejected_untouched() {
        let mut w = vec![1.0, 2.0];
        let mut state = OptimizerState::default();
        let err = update_params(
            ParamsMut::Dense(&mut w),
            &Gradient::Dense(vec![0.0, f64::NAN]),
            &mut state,
            &Optimizer::Sgd,
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("w[1]"));
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn dimension_mismatch() {
        let mut w = vec![1.0];
        let mut state = OptimizerState::default();
        assert!(update_params(
            ParamsMut::Dense(&mut w),
            &Gradient::Dense(vec![0.0, 1.0]),
            &mut state,
            &Optimizer::Sgd,
            1.0
        )
        .is_err());
    }
}
