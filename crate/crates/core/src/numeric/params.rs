use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NumericError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Parameters are rounded to `f32` after every update.
    Single,
    #[default]
    Double,
}

impl Precision {
    pub fn round(self, m: &mut Matrix) {
        if self == Precision::Single {
            m.mapv_inplace(|x| x as f32 as f64);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
}

/// Named parameters in a deterministic (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Matrix, trainable: bool) -> Result<(), NumericError> {
        if self.params.contains_key(name) {
            return Err(NumericError::Checkpoint(format!("duplicate parameter {name}")));
        }
        self.params.insert(
            name.to_string(),
            Param {
                name: name.to_string(),
                value,
                trainable,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Matrix, NumericError> {
        self.get(name)
            .map(|p| &p.value)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Checks that every parameter of `plan` exists with the planned shape.
    pub fn check_against(&self, plan: &ShapePlan) -> Result<(), NumericError> {
        for spec in &plan.specs {
            let p = self
                .get(&spec.name)
                .ok_or_else(|| NumericError::MissingParam(spec.name.clone()))?;
            if p.value.dim() != (spec.rows, spec.cols) {
                return Err(NumericError::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    spec.name,
                    p.value.dim(),
                    (spec.rows, spec.cols)
                )));
            }
        }
        if self.len() != plan.specs.len() {
            let extra: Vec<&str> = self
                .names()
                .filter(|n| !plan.specs.iter().any(|s| s.name == *n))
                .collect();
            return Err(NumericError::Checkpoint(format!("unexpected parameters {extra:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) with fan_in = cols, fan_out = rows.
    Xavier,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapePlan {
    pub specs: Vec<ParamSpec>,
}

impl ShapePlan {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) {
        self.specs.push(ParamSpec {
            name: name.into(),
            rows,
            cols,
            init,
        });
    }

    pub fn scalar_count(&self) -> usize {
        self.specs.iter().map(|s| s.rows * s.cols).sum()
    }
}

/// Initialises every planned parameter. Each parameter draws from its own
/// stream derived from `seed` and its name, so adding a parameter does not
/// perturb the others.
pub fn init_params(plan: &ShapePlan, seed: u64) -> Result<ParamStore, NumericError> {
    let mut store = ParamStore::new();
    for spec in &plan.specs {
        let shape = (spec.rows, spec.cols);
        let value = match spec.init {
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
            Init::Xavier => {
                let bound = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
                let stream = spec.name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                    (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
                });
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream);
                Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
            }
        };
        store.insert(&spec.name, value, true)?;
    }
    Ok(store)
}
