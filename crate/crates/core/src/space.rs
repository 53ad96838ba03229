//! Search spaces over skill parameters.
//!
//! A configuration is a `Vec<ParamValue>` aligned with `ParamSpace::params`.
//! The optimizer works on an encoded unit-cube representation: reals,
//! integers and ordinals map to one coordinate each, categoricals to a
//! one-hot block.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("parameter `{0}`: bounds must be finite with lower < upper")]
    BadBounds(String),
    #[error("parameter `{0}`: value list must be non-empty")]
    EmptyValues(String),
    #[error("duplicate parameter name `{0}`")]
    Duplicate(String),
    #[error("configuration has {got} values, space has {expected} parameters")]
    Arity { expected: usize, got: usize },
    #[error("parameter `{0}`: value out of bounds or of the wrong type")]
    OutOfSpace(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamKind {
    Real {
        lower: f64,
        upper: f64,
    },
    Integer {
        lower: i64,
        upper: i64,
    },
    /// Ordered numeric levels.
    Ordinal {
        values: Vec<f64>,
    },
    Categorical {
        values: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Integer(i64),
    Real(f64),
    Label(String),
}

impl ParamValue {
    /// Numeric view; labels have none.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Integer(i) => Some(*i as f64),
            ParamValue::Real(r) => Some(*r),
            ParamValue::Label(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamDef>,
}

impl ParamSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self, SpaceError> {
        let space = Self { params };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::Duplicate(p.name.clone()));
            }
            match &p.kind {
                ParamKind::Real { lower, upper } => {
                    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                        return Err(SpaceError::BadBounds(p.name.clone()));
                    }
                }
                ParamKind::Integer { lower, upper } => {
                    if lower >= upper {
                        return Err(SpaceError::BadBounds(p.name.clone()));
                    }
                }
                ParamKind::Ordinal { values } => {
                    if values.is_empty() {
                        return Err(SpaceError::EmptyValues(p.name.clone()));
                    }
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(SpaceError::BadBounds(p.name.clone()));
                    }
                }
                ParamKind::Categorical { values } => {
                    if values.is_empty() {
                        return Err(SpaceError::EmptyValues(p.name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Width of the unit-cube encoding.
    pub fn encoded_dim(&self) -> usize {
        self.params
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Categorical { values } => values.len(),
                _ => 1,
            })
            .sum()
    }

    pub fn contains(&self, config: &[ParamValue]) -> bool {
        self.check(config).is_ok()
    }

    pub fn check(&self, config: &[ParamValue]) -> Result<(), SpaceError> {
        if config.len() != self.params.len() {
            return Err(SpaceError::Arity {
                expected: self.params.len(),
                got: config.len(),
            });
        }
        for (p, v) in self.params.iter().zip(config) {
            let ok = match (&p.kind, v) {
                (ParamKind::Real { lower, upper }, ParamValue::Real(x)) => {
                    x.is_finite() && *x >= *lower && *x <= *upper
                }
                (ParamKind::Integer { lower, upper }, ParamValue::Integer(x)) => x >= lower && x <= upper,
                (ParamKind::Ordinal { values }, ParamValue::Real(x)) => values.contains(x),
                (ParamKind::Ordinal { values }, ParamValue::Integer(x)) => values.contains(&(*x as f64)),
                (ParamKind::Categorical { values }, ParamValue::Label(s)) => values.contains(s),
                _ => false,
            };
            if !ok {
                return Err(SpaceError::OutOfSpace(p.name.clone()));
            }
        }
        Ok(())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<ParamValue> {
        self.params
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Real { lower, upper } => ParamValue::Real(rng.gen_range(*lower..=*upper)),
                ParamKind::Integer { lower, upper } => ParamValue::Integer(rng.gen_range(*lower..=*upper)),
                ParamKind::Ordinal { values } => ParamValue::Real(values[rng.gen_range(0..values.len())]),
                ParamKind::Categorical { values } => ParamValue::Label(values[rng.gen_range(0..values.len())].clone()),
            })
            .collect()
    }

    /// Maps a configuration into the unit cube.
    pub fn encode(&self, config: &[ParamValue]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (p, v) in self.params.iter().zip(config) {
            match &p.kind {
                ParamKind::Real { lower, upper } => {
                    let x = v.as_f64().unwrap_or(*lower);
                    out.push((x - lower) / (upper - lower));
                }
                ParamKind::Integer { lower, upper } => {
                    let x = v.as_f64().unwrap_or(*lower as f64);
                    out.push((x - *lower as f64) / (*upper - *lower) as f64);
                }
                ParamKind::Ordinal { values } => {
                    let x = v.as_f64().unwrap_or(values[0]);
                    let idx = nearest_index(values, x);
                    out.push(if values.len() > 1 {
                        idx as f64 / (values.len() - 1) as f64
                    } else {
                        0.5
                    });
                }
                ParamKind::Categorical { values } => {
                    let idx = match v {
                        ParamValue::Label(s) => values.iter().position(|c| c == s).unwrap_or(0),
                        other => other.as_f64().map(|f| f as usize).unwrap_or(0),
                    };
                    out.extend((0..values.len()).map(|i| if i == idx { 1.0 } else { 0.0 }));
                }
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode); rounds integers, snaps ordinals to the
    /// nearest level and takes the arg-max of each one-hot block.
    pub fn decode(&self, x: &[f64]) -> Vec<ParamValue> {
        let mut i = 0;
        let mut out = Vec::with_capacity(self.params.len());
        for p in &self.params {
            match &p.kind {
                ParamKind::Real { lower, upper } => {
                    let u = x[i].clamp(0.0, 1.0);
                    out.push(ParamValue::Real(lower + u * (upper - lower)));
                    i += 1;
                }
                ParamKind::Integer { lower, upper } => {
                    let u = x[i].clamp(0.0, 1.0);
                    let v = (*lower as f64 + u * (*upper - *lower) as f64).round() as i64;
                    out.push(ParamValue::Integer(v.clamp(*lower, *upper)));
                    i += 1;
                }
                ParamKind::Ordinal { values } => {
                    let u = x[i].clamp(0.0, 1.0);
                    let idx = ((u * (values.len() - 1) as f64).round() as usize).min(values.len() - 1);
                    out.push(ParamValue::Real(values[idx]));
                    i += 1;
                }
                ParamKind::Categorical { values } => {
                    let block = &x[i..i + values.len()];
                    let idx = block
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |best, (j, &v)| {
                                if v > best.1 {
                                    (j, v)
                                } else {
                                    best
                                }
                            },
                        )
                        .0;
                    out.push(ParamValue::Label(values[idx].clone()));
                    i += values.len();
                }
            }
        }
        out
    }
}

fn nearest_index(values: &[f64], x: f64) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - x)
                .abs()
                .partial_cmp(&(b.1 - x).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}
