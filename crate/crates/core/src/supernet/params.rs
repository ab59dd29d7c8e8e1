use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Named trainable tensors kept in creation order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawStore")]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl From<RawStore> for ParamStore {
    fn from(raw: RawStore) -> Self {
        let mut store = ParamStore {
            names: raw.names,
            values: raw.values,
            index: HashMap::new(),
        };
        store.rebuild_index();
        store
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.values[i] = value;
            return;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }

    /// Registers every tensor as a gradient-requiring leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self.values.iter().map(|v| tape.param(v.clone())).collect();
        Bound {
            index: self.index.clone(),
            vars,
        }
    }

    /// Registers every tensor as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        let vars = self.values.iter().map(|v| tape.constant(v.clone())).collect();
        Bound {
            index: self.index.clone(),
            vars,
        }
    }

    /// Names existing tape variables in store order (e.g. inputs handed out by
    /// [`crate::tensor::grad_check`]).
    pub fn bind_vars(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "{} variables for {} parameters",
                vars.len(),
                self.values.len()
            )));
        }
        Ok(Bound {
            index: self.index.clone(),
            vars: vars.to_vec(),
        })
    }

    /// Copies every tensor whose name also exists in `other`; returns how many were copied.
    pub fn copy_shared_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for (name, value) in self.names.iter().zip(&mut self.values) {
            if let Some(src) = other.get(name) {
                if src.shape() != value.shape() {
                    return Err(Error::Dimension(format!(
                        "parameter {name}: {:?} vs {:?}",
                        src.shape(),
                        value.shape()
                    )));
                }
                *value = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

/// A [`ParamStore`] registered on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    index: HashMap<String, usize>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients aligned with the store order (`None` where nothing flowed).
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Option<Tensor>> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}
