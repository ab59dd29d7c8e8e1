//! Run configuration: TOML file, per-task defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{RetrainConfig, SearchConfig};
use crate::supernet::{Ablation, Ablations, TaskKind};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "LINKNAS_OUTPUT_ROOT";

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// Edge list (homogeneous LP, node classification), directory with
    /// `train.txt`/`valid.txt`/`test.txt` (KG), or TU-format directory (GC).
    pub dataset: PathBuf,
    /// Name used in reports; defaults to the dataset file stem.
    pub dataset_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub dim: usize,
    pub layers: usize,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch_lr: Option<f64>,
    pub batch_size: usize,
    pub dropout: f64,
    pub search_epochs: usize,
    pub retrain_epochs: usize,
    pub patience: usize,
    pub tau0: f64,
    pub tau_final: f64,
    pub seeds: Vec<u64>,
    pub ablations: Vec<String>,
    pub output_dir: PathBuf,
    /// Enclosing-subgraph radius.
    pub hops: usize,
    /// Distance-encoding cap.
    pub dmax: usize,
    pub label_smoothing: f64,
    /// Degree cap for one-hot degree features.
    pub max_degree: usize,
    /// Examples per forward pass during evaluation.
    pub eval_batch: usize,
}

/// Every key optional; the on-disk and command-line form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub task: Option<TaskKind>,
    pub dataset: Option<PathBuf>,
    pub dataset_name: Option<String>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub dim: Option<usize>,
    pub layers: Option<usize>,
    pub lr: Option<f64>,
    pub arch_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub search_epochs: Option<usize>,
    pub retrain_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub tau0: Option<f64>,
    pub tau_final: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub ablations: Option<Vec<String>>,
    pub output_dir: Option<PathBuf>,
    pub hops: Option<usize>,
    pub dmax: Option<usize>,
    pub label_smoothing: Option<f64>,
    pub max_degree: Option<usize>,
    pub eval_batch: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        PartialConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl PartialConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Output-root override from the environment.
    pub fn from_env() -> Self {
        Self {
            output_dir: std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from),
            ..Self::default()
        }
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        let base = self;
        overlay!(base, top; task, dataset, dataset_name, features, labels, dim, layers, lr, arch_lr,
            batch_size, dropout, search_epochs, retrain_epochs, patience, tau0, tau_final, seeds,
            ablations, output_dir, hops, dmax, label_smoothing, max_degree, eval_batch)
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let task = self.task.ok_or_else(|| Error::Config("missing required key `task`".into()))?;
        let dataset = self
            .dataset
            .ok_or_else(|| Error::Config("missing required key `dataset`".into()))?;
        let d = TaskDefaults::for_task(task);
        let dataset_name = self.dataset_name.unwrap_or_else(|| {
            dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        });
        let epochs = d.epochs;
        let cfg = RunConfig {
            task,
            dataset,
            dataset_name,
            features: self.features,
            labels: self.labels,
            dim: self.dim.unwrap_or(d.dim),
            layers: self.layers.unwrap_or(d.layers),
            lr: self.lr.unwrap_or(d.lr),
            arch_lr: self.arch_lr,
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            dropout: self.dropout.unwrap_or(d.dropout),
            search_epochs: self.search_epochs.unwrap_or(epochs),
            retrain_epochs: self.retrain_epochs.unwrap_or(epochs),
            patience: self.patience.unwrap_or(20),
            tau0: self.tau0.unwrap_or(1.0),
            tau_final: self.tau_final.unwrap_or(0.1),
            seeds: self.seeds.unwrap_or_else(|| vec![0, 1, 2, 3]),
            ablations: self.ablations.unwrap_or_default(),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("runs")),
            hops: self.hops.unwrap_or(2),
            dmax: self.dmax.unwrap_or(3),
            label_smoothing: self.label_smoothing.unwrap_or(0.1),
            max_degree: self.max_degree.unwrap_or(64),
            eval_batch: self.eval_batch.unwrap_or(256),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-task hyperparameter defaults, one value picked from each published range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskDefaults {
    pub lr: f64,
    pub layers: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub dropout: f64,
    pub epochs: usize,
}

impl TaskDefaults {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::LpHomogeneous => Self {
                lr: 1e-4,
                layers: 2,
                batch_size: 64,
                dim: 100,
                dropout: 0.0,
                epochs: 300,
            },
            TaskKind::LpKg => Self {
                lr: 1e-3,
                layers: 1,
                batch_size: 128,
                dim: 200,
                dropout: 0.0,
                epochs: 200,
            },
            TaskKind::NodeClassification => Self {
                lr: 5e-3,
                layers: 2,
                batch_size: 64,
                dim: 64,
                dropout: 0.5,
                epochs: 200,
            },
            TaskKind::GraphClassification => Self {
                lr: 1e-3,
                layers: 4,
                batch_size: 32,
                dim: 32,
                dropout: 0.0,
                epochs: 200,
            },
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Validation(format!("{name} must be > 0")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses a TOML file, filling defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PartialConfig::load(path)?.resolve()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        PartialConfig::from_toml(text)?.resolve()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        positive("dim", self.dim)?;
        positive("layers", self.layers)?;
        positive("batch_size", self.batch_size)?;
        positive("search_epochs", self.search_epochs)?;
        positive("retrain_epochs", self.retrain_epochs)?;
        positive("patience", self.patience)?;
        positive("dmax", self.dmax)?;
        positive("eval_batch", self.eval_batch)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("lr {} must be > 0", self.lr)));
        }
        if let Some(a) = self.arch_lr {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Validation(format!("arch_lr {a} must be > 0")));
            }
        }
        if !(self.tau0 > self.tau_final && self.tau_final > 0.0) {
            return Err(Error::Validation(format!(
                "temperatures must satisfy tau0 > tau_final > 0, got tau0 = {} and tau_final = {}",
                self.tau0, self.tau_final
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Validation(format!(
                "label_smoothing {} outside [0,1)",
                self.label_smoothing
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds must not be empty".into()));
        }
        self.ablation_set()?.validate_for(self.task)
    }

    pub fn ablation_set(&self) -> Result<Ablations> {
        Ablations::parse(&self.ablations)
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        Ok(SearchConfig {
            epochs: self.search_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            arch_lr: self.arch_lr,
            tau0: self.tau0,
            tau_final: self.tau_final,
            darts: self.ablation_set()?.has(Ablation::DartsMode),
        })
    }

    pub fn retrain_config(&self) -> RetrainConfig {
        RetrainConfig {
            epochs: self.retrain_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
        }
    }

    /// Minimal config for `task` on `dataset` with all defaults.
    pub fn defaults(task: TaskKind, dataset: impl Into<PathBuf>) -> Result<Self> {
        PartialConfig {
            task: Some(task),
            dataset: Some(dataset.into()),
            ..PartialConfig::default()
        }
        .resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_homogeneous_defaults() {
        let c = RunConfig::from_toml("task = \"lp_homo\"\ndataset = \"usair.txt\"\n").unwrap();
        assert_eq!((c.dim, c.layers), (100, 2));
        assert_eq!(c.lr, 1e-4);
        assert_eq!(c.search_epochs, 300);
        assert_eq!(c.dataset_name, "usair");
        assert_eq!(c.seeds, vec![0, 1, 2, 3]);
        assert_eq!((c.tau0, c.tau_final), (1.0, 0.1));
    }

    #[test]
    fn defaults_follow_task() {
        let kg = RunConfig::defaults(TaskKind::LpKg, "kg").unwrap();
        assert_eq!((kg.dim, kg.layers, kg.batch_size), (200, 1, 128));
        let gc = RunConfig::defaults(TaskKind::GraphClassification, "MUTAG").unwrap();
        assert_eq!(gc.layers, 4);
    }

    #[test]
    fn missing_keys_are_named() {
        let e = RunConfig::from_toml("dataset = \"x\"").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("`task`")), "{e}");
        let e = RunConfig::from_toml("task = \"nc\"").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("`dataset`")), "{e}");
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::from_toml("task = \"nc\"\ndataset = \"x\"\nwidth = 3").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("width")), "{e}");
    }

    #[test]
    fn range_checks() {
        let e = RunConfig::from_toml("task = \"nc\"\ndataset = \"x\"\ndropout = 1.5").unwrap_err();
        assert!(matches!(&e, Error::Validation(m) if m.contains("[0,1)")), "{e}");
        let e = RunConfig::from_toml("task = \"nc\"\ndataset = \"x\"\ntau0 = 0.1\ntau_final = 0.5").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = RunConfig::from_toml("task = \"nc\"\ndataset = \"x\"\ndim = 0").unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = RunConfig::from_toml("task = \"nc\"\ndataset = \"x\"\nablations = [\"diff_pool\"]").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn write_reparse_round_trip() {
        let c = RunConfig::from_toml(
            "task = \"lp_kg\"\ndataset = \"kg\"\narch_lr = 0.01\nablations = [\"shared_lambda\"]\nseeds = [7]\n",
        )
        .unwrap();
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overlay_precedence() {
        let file = PartialConfig::from_toml("task = \"nc\"\ndataset = \"a\"\ndim = 8\nlayers = 3").unwrap();
        let flags = PartialConfig {
            dim: Some(16),
            ..PartialConfig::default()
        };
        let c = file.overlay(flags).resolve().unwrap();
        assert_eq!((c.dim, c.layers, c.batch_size), (16, 3, 64));
    }
}
