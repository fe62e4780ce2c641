use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Parameter address for tabular scorers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResponseKey {
    pub prompt_id: String,
    pub response_id: String,
}

impl ResponseKey {
    pub fn new(prompt_id: impl Into<String>, response_id: impl Into<String>) -> Self {
        Self { prompt_id: prompt_id.into(), response_id: response_id.into() }
    }
}

impl std::fmt::Display for ResponseKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.prompt_id, self.response_id)
    }
}

/// Sparse table of reals; absent entries read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table(pub BTreeMap<ResponseKey, f64>);

#[derive(Serialize, Deserialize)]
struct Entry {
    prompt_id: String,
    response_id: String,
    value: f64,
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|(k, &value)| Entry {
            prompt_id: k.prompt_id.clone(),
            response_id: k.response_id.clone(),
            value,
        }))
    }
}

impl<'de> Deserialize<'de> for Table {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(Table(entries.into_iter().map(|e| (ResponseKey::new(e.prompt_id, e.response_id), e.value)).collect()))
    }
}

impl Table {
    pub fn get(&self, key: &ResponseKey) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    pub fn entry(&mut self, key: ResponseKey) -> &mut f64 {
        self.0.entry(key).or_insert(0.0)
    }

    pub fn add(&mut self, key: ResponseKey, value: f64) {
        *self.entry(key) += value;
    }
}

/// Gradient of a scalar with respect to a scorer's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gradient {
    Sparse(Table),
    Dense(Vec<f64>),
}

impl Gradient {
    pub fn scale(&mut self, factor: f64) {
        match self {
            Gradient::Sparse(t) => t.0.values_mut().for_each(|g| *g *= factor),
            Gradient::Dense(v) => v.iter_mut().for_each(|g| *g *= factor),
        }
    }

    /// `self += factor · other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Gradient, factor: f64) {
        match (self, other) {
            (Gradient::Sparse(a), Gradient::Sparse(b)) => {
                for (k, g) in &b.0 {
                    a.add(k.clone(), factor * g);
                }
            }
            (Gradient::Dense(a), Gradient::Dense(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += factor * y;
                }
            }
            _ => panic!("gradient shape mismatch"),
        }
    }

    pub fn zeros_like(&self) -> Gradient {
        match self {
            Gradient::Sparse(_) => Gradient::Sparse(Table::default()),
            Gradient::Dense(v) => Gradient::Dense(vec![0.0; v.len()]),
        }
    }

    /// Inner product with another gradient of the same shape.
    pub fn dot(&self, other: &Gradient) -> f64 {
        match (self, other) {
            (Gradient::Sparse(a), Gradient::Sparse(b)) => a.0.iter().map(|(k, g)| g * b.get(k)).sum(),
            (Gradient::Dense(a), Gradient::Dense(b)) => crate::math::dot(a, b),
            _ => panic!("gradient shape mismatch"),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = (String, f64)> + '_> {
        match self {
            Gradient::Sparse(t) => Box::new(t.0.iter().map(|(k, g)| (k.to_string(), *g))),
            Gradient::Dense(v) => Box::new(v.iter().enumerate().map(|(i, g)| (format!("w[{i}]"), *g))),
        }
    }
}

/// Mutable view of a scorer's trainable parameters.
#[derive(Debug)]
pub enum ParamsMut<'a> {
    Table(&'a mut Table),
    Dense(&'a mut Vec<f64>),
}

impl ParamsMut<'_> {
    /// `θ += step · direction`.
    pub fn axpy(&mut self, direction: &Gradient, step: f64) {
        match (self, direction) {
            (ParamsMut::Table(t), Gradient::Sparse(g)) => {
                for (k, d) in &g.0 {
                    t.add(k.clone(), step * d);
                }
            }
            (ParamsMut::Dense(w), Gradient::Dense(g)) => {
                for (x, d) in w.iter_mut().zip(g) {
                    *x += step * d;
                }
            }
            _ => panic!("parameter/gradient shape mismatch"),
        }
    }
}
