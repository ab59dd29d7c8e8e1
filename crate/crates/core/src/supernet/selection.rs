use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::{Ablations, Candidate, SlotCatalog, TaskKind};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Sampled,
    Relaxed,
    Derived,
}

/// Per-slot mixing weights over candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: SelectionMode,
    pub theta: Vec<Vec<f64>>,
}

/// How one slot is evaluated during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// Only this candidate runs.
    Fixed(usize),
    /// Every candidate runs and outputs are mixed by the `[n]` weights.
    Mixed(Var),
}

impl Selection {
    pub fn new(mode: SelectionMode, theta: Vec<Vec<f64>>) -> Result<Self> {
        for (s, t) in theta.iter().enumerate() {
            if t.is_empty() || t.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Contract(format!("slot {s}: weights {t:?} must be non-negative")));
            }
            let total: f64 = t.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("slot {s}: weights sum to {total}")));
            }
            if mode == SelectionMode::Derived && t.iter().filter(|&&x| x == 1.0).count() != 1 {
                return Err(Error::Contract(format!("slot {s}: derived weights {t:?} are not one-hot")));
            }
        }
        Ok(Self { mode, theta })
    }

    pub fn one_hot(slots: &[SlotCatalog], indices: &[usize], mode: SelectionMode) -> Result<Self> {
        if indices.len() != slots.len() {
            return Err(Error::Contract(format!(
                "{} indices for {} slots",
                indices.len(),
                slots.len()
            )));
        }
        let theta = slots
            .iter()
            .zip(indices)
            .map(|(s, &i)| {
                if i >= s.len() {
                    return Err(Error::Contract(format!("slot {}: index {i} out of range", s.id)));
                }
                let mut t = vec![0.0; s.len()];
                t[i] = 1.0;
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Self::new(mode, theta)
    }

    pub fn uniform(slots: &[SlotCatalog]) -> Self {
        let theta = slots
            .iter()
            .map(|s| vec![1.0 / s.len() as f64; s.len()])
            .collect();
        Self {
            mode: SelectionMode::Relaxed,
            theta,
        }
    }

    /// Index of the largest weight per slot, ties to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.theta.iter().map(|t| argmax(t)).collect()
    }

    /// Registers the selection on `tape`: derived selections become
    /// [`Choice::Fixed`], others become constant [`Choice::Mixed`] weights.
    pub fn choices(&self, tape: &mut Tape) -> Vec<Choice> {
        self.theta
            .iter()
            .map(|t| match self.mode {
                SelectionMode::Derived => Choice::Fixed(argmax(t)),
                _ => Choice::Mixed(tape.constant(Tensor::vector(t.clone()))),
            })
            .collect()
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Chosen candidate per slot plus the shape of the network it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedArchitecture {
    pub task: TaskKind,
    pub layers: usize,
    pub dim: usize,
    #[serde(default)]
    pub ablations: Ablations,
    pub slots: BTreeMap<String, Candidate>,
}

impl DerivedArchitecture {
    pub fn from_indices(
        task: TaskKind,
        layers: usize,
        dim: usize,
        ablations: &Ablations,
        catalogs: &[SlotCatalog],
        indices: &[usize],
    ) -> Result<Self> {
        if indices.len() != catalogs.len() {
            return Err(Error::Contract(format!(
                "{} choices for {} slots",
                indices.len(),
                catalogs.len()
            )));
        }
        let mut slots = BTreeMap::new();
        for (c, &i) in catalogs.iter().zip(indices) {
            let cand = *c
                .candidates
                .get(i)
                .ok_or_else(|| Error::Contract(format!("slot {}: index {i} out of range", c.id)))?;
            slots.insert(c.id.clone(), cand);
        }
        Ok(Self {
            task,
            layers,
            dim,
            ablations: ablations.clone(),
            slots,
        })
    }

    /// Candidate index per catalog slot.
    pub fn indices_in(&self, catalogs: &[SlotCatalog]) -> Result<Vec<usize>> {
        if self.slots.len() != catalogs.len() {
            return Err(Error::Contract(format!(
                "architecture has {} slots, search space {}",
                self.slots.len(),
                catalogs.len()
            )));
        }
        catalogs
            .iter()
            .map(|c| {
                let chosen = self
                    .slots
                    .get(&c.id)
                    .ok_or_else(|| Error::Contract(format!("architecture lacks slot {}", c.id)))?;
                c.position(*chosen)
                    .ok_or_else(|| Error::Contract(format!("slot {}: {chosen} is not a candidate", c.id)))
            })
            .collect()
    }

    /// Catalogs restricted to the chosen candidate of every slot.
    pub fn restrict(&self, catalogs: &[SlotCatalog]) -> Result<Vec<SlotCatalog>> {
        let idx = self.indices_in(catalogs)?;
        Ok(catalogs
            .iter()
            .zip(idx)
            .map(|(c, i)| SlotCatalog {
                candidates: vec![c.candidates[i]],
                ..c.clone()
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("architecture JSON: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
