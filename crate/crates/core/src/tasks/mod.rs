//! End-to-end task pipelines and evaluation metrics.
//!
//! Each task prepares its data once per seed, then runs
//! search → derive → retrain → test evaluation through [`run_pipeline`].

mod baseline;
mod gc;
mod kg;
mod lp;
pub mod metrics;
mod nc;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use baseline::common_neighbors;
pub use gc::{degree_features, GraphTask};
pub use kg::KgTask;
pub use lp::{LinkExamples, LinkTask};
pub use metrics::{accuracy, auc, filtered_rank, mrr_hits, MetricsReport};
pub use nc::NodeTask;

use crate::config::RunConfig;
use crate::error::Result;
use crate::graph::{Graph, KgDataset, LabeledGraph};
use crate::rng::{stream, Stream};
use crate::search::{retrain, search, Objective, SearchLog};
use crate::supernet::{DerivedArchitecture, NetSpec, Supernet, TaskKind};

/// A prepared task: an optimisation objective plus its network shape and
/// held-out test evaluation.
pub trait Task: Objective {
    fn kind(&self) -> TaskKind;
    fn net_spec(&self) -> NetSpec;
    /// Metrics of a trained network (every slot at its first candidate) on a held-out split.
    fn metrics(&self, net: &Supernet, split: EvalSplit) -> Result<BTreeMap<String, f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Valid,
    Test,
}

impl std::str::FromStr for EvalSplit {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Self::Valid),
            "test" => Ok(Self::Test),
            _ => Err(crate::error::Error::Config(format!("unknown split {s:?} (expected valid or test)"))),
        }
    }
}

/// Selection that runs a child network as is.
pub(crate) fn fixed_selection(net: &Supernet) -> Result<crate::supernet::Selection> {
    crate::search::derived_selection(net, &vec![0; net.slots().len()])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_secs: f64,
    pub search_secs: f64,
    pub retrain_secs: f64,
    pub eval_secs: f64,
}

/// Outputs of one seed of a pipeline.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub task: TaskKind,
    pub dataset: String,
    pub seed: u64,
    /// Empty when an architecture was supplied instead of searched.
    pub search_log: SearchLog,
    pub architecture: DerivedArchitecture,
    pub model: Supernet,
    pub val_curve: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub best_epoch: usize,
    /// Test-split metrics only.
    pub metrics: BTreeMap<String, f64>,
    pub timings: Timings,
}

/// Search (unless `arch` is given), retrain the derived child and evaluate it on
/// the test split.
pub fn run_pipeline(
    task: &dyn Task,
    cfg: &RunConfig,
    seed: u64,
    arch: Option<DerivedArchitecture>,
) -> Result<TaskRun> {
    let mut timings = Timings::default();
    let spec = task.net_spec();
    let t = Instant::now();
    let (search_log, architecture) = match arch {
        Some(a) => (SearchLog::default(), a),
        None => {
            let net = Supernet::new(spec.clone(), &mut stream(seed, Stream::Init))?;
            let out = search(task, net, &cfg.search_config()?, seed)?;
            (out.log, out.architecture)
        }
    };
    timings.search_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let trained = retrain(task, &spec, &architecture, &cfg.retrain_config(), seed)?;
    timings.retrain_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let metrics = task.metrics(&trained.net, EvalSplit::Test)?;
    timings.eval_secs = t.elapsed().as_secs_f64();
    log::info!("seed {seed}: test {metrics:?}");
    Ok(TaskRun {
        task: task.kind(),
        dataset: cfg.dataset_name.clone(),
        seed,
        search_log,
        architecture,
        model: trained.net,
        val_curve: trained.val_curve,
        train_losses: trained.train_losses,
        best_epoch: trained.best_epoch,
        metrics,
        timings,
    })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let out = f()?;
    Ok((out, t.elapsed().as_secs_f64()))
}

pub fn run_lp_homogeneous(graph: &Graph, cfg: &RunConfig, seed: u64) -> Result<TaskRun> {
    let (task, secs) = timed(|| LinkTask::new(graph, cfg, seed))?;
    let mut run = run_pipeline(&task, cfg, seed, None)?;
    run.timings.prepare_secs = secs;
    Ok(run)
}

pub fn run_lp_kg(data: &KgDataset, cfg: &RunConfig, seed: u64) -> Result<TaskRun> {
    let (task, secs) = timed(|| KgTask::new(data, cfg))?;
    let mut run = run_pipeline(&task, cfg, seed, None)?;
    run.timings.prepare_secs = secs;
    Ok(run)
}

pub fn run_node_classification(graph: &Graph, cfg: &RunConfig, seed: u64) -> Result<TaskRun> {
    let (task, secs) = timed(|| NodeTask::new(graph, cfg, seed))?;
    let mut run = run_pipeline(&task, cfg, seed, None)?;
    run.timings.prepare_secs = secs;
    Ok(run)
}

pub fn run_graph_classification(graphs: &[LabeledGraph], cfg: &RunConfig, seed: u64) -> Result<TaskRun> {
    let (task, secs) = timed(|| GraphTask::new(graphs, cfg, seed))?;
    let mut run = run_pipeline(&task, cfg, seed, None)?;
    run.timings.prepare_secs = secs;
    Ok(run)
}

/// Splits `0..n` into three shuffled index sets of the given fractions
/// (valid and test rounded, train takes the rest).
pub(crate) fn split_indices(n: usize, valid: f64, test: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Stream::Split));
    let nv = (n as f64 * valid).round() as usize;
    let nt = (n as f64 * test).round() as usize;
    let test_ids = order[..nt.min(n)].to_vec();
    let valid_ids = order[nt.min(n)..(nt + nv).min(n)].to_vec();
    let train_ids = order[(nt + nv).min(n)..].to_vec();
    (train_ids, valid_ids, test_ids)
}

/// Row-wise argmax of a `[n, c]` tensor.
pub(crate) fn predict_classes(logits: &crate::tensor::Tensor) -> Result<Vec<usize>> {
    let (n, _) = logits.dims2()?;
    Ok((0..n).map(|r| crate::supernet::argmax(logits.row(r))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_indices_partition() {
        let (a, b, c) = split_indices(100, 0.1, 0.1, 3);
        assert_eq!((a.len(), b.len(), c.len()), (80, 10, 10));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.1, 0.1, 3), (a, b, c));
    }
}
