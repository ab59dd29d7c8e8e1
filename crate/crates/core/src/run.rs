//! Run orchestration and on-disk artifacts.
//!
//! Layout under `output_dir/<dataset>-<task>/`:
//!
//! ```text
//! report.json, report.csv           aggregate over seeds
//! seed-<s>/config.toml              resolved configuration
//! seed-<s>/seed.txt
//! seed-<s>/search_log.jsonl         one record per search epoch
//! seed-<s>/search_curve.csv         epoch,tau,train_loss,val_metric
//! seed-<s>/architecture.json
//! seed-<s>/model.json               retrained weights
//! seed-<s>/retrain_curve.csv        epoch,train_loss,val_metric
//! seed-<s>/metrics.json, metrics.csv
//! seed-<s>/timings.json             wall-clock only; not part of the replay contract
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, load_kg_dataset, load_node_features, load_node_labels, load_tu_dataset};
use crate::graph::{Graph, KgDataset, LabeledGraph};
use crate::search::SearchLog;
use crate::supernet::{DerivedArchitecture, NetSpec, ParamStore, Supernet, TaskKind};
use crate::tasks::{run_pipeline, EvalSplit, GraphTask, KgTask, LinkTask, MetricsReport, NodeTask, Task, TaskRun};

/// Loaded data for any task.
#[derive(Debug, Clone)]
pub enum Dataset {
    Homogeneous(Graph),
    Knowledge(KgDataset),
    Graphs(Vec<LabeledGraph>),
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.task {
        TaskKind::LpHomogeneous => Ok(Dataset::Homogeneous(load_edge_list(&cfg.dataset)?)),
        TaskKind::LpKg => Ok(Dataset::Knowledge(load_kg_dataset(&cfg.dataset)?)),
        TaskKind::NodeClassification => {
            let mut g = load_edge_list(&cfg.dataset)?;
            let labels = cfg
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("node classification needs a `labels` file".into()))?;
            if let Some(f) = &cfg.features {
                let feats = load_node_features(f)?;
                // feature rows fix the node count when isolated nodes trail the edge list
                let rows = feats.shape()[0];
                if rows > g.node_count() {
                    g = Graph::from_edges(rows, g.edges().iter().copied())?;
                }
                g = g.with_features(feats)?;
            }
            let n = g.node_count();
            Ok(Dataset::Homogeneous(g.with_labels(load_node_labels(labels, n)?)?))
        }
        TaskKind::GraphClassification => {
            let name = cfg
                .dataset
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Dataset::Graphs(load_tu_dataset(&cfg.dataset, &name)?))
        }
    }
}

/// Builds the per-seed task (splits depend on the seed).
pub fn prepare_task(data: &Dataset, cfg: &RunConfig, seed: u64) -> Result<Box<dyn Task>> {
    Ok(match (cfg.task, data) {
        (TaskKind::LpHomogeneous, Dataset::Homogeneous(g)) => Box::new(LinkTask::new(g, cfg, seed)?),
        (TaskKind::NodeClassification, Dataset::Homogeneous(g)) => Box::new(NodeTask::new(g, cfg, seed)?),
        (TaskKind::LpKg, Dataset::Knowledge(d)) => Box::new(KgTask::new(d, cfg)?),
        (TaskKind::GraphClassification, Dataset::Graphs(gs)) => Box::new(GraphTask::new(gs, cfg, seed)?),
        (t, _) => return Err(Error::Config(format!("dataset does not fit task {t}"))),
    })
}

/// Retrained network plus what is needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub spec: NetSpec,
    pub architecture: DerivedArchitecture,
    pub params: ParamStore,
}

impl SavedModel {
    pub fn of(run: &TaskRun) -> Self {
        Self {
            spec: run.model.spec().clone(),
            architecture: run.architecture.clone(),
            params: run.model.params().clone(),
        }
    }

    pub fn into_network(self) -> Result<Supernet> {
        Supernet::from_params(self.spec, &self.architecture, self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn experiment_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}-{}", cfg.dataset_name, cfg.task))
}

pub fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    experiment_dir(cfg).join(format!("seed-{seed}"))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// `epoch,tau,train_loss,val_metric` per search epoch.
pub fn search_curve_csv(log: &SearchLog) -> String {
    let mut s = String::from("epoch,tau,train_loss,val_metric\n");
    for r in &log.records {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.tau, r.train_loss, r.val_metric);
    }
    s
}

pub fn retrain_curve_csv(run: &TaskRun) -> String {
    let mut s = String::from("epoch,train_loss,val_metric\n");
    for (e, (l, v)) in run.train_losses.iter().zip(&run.val_curve).enumerate() {
        let _ = writeln!(s, "{e},{l},{v}");
    }
    s
}

#[derive(Serialize)]
struct SeedMetrics<'a> {
    dataset: &'a str,
    task: TaskKind,
    seed: u64,
    best_epoch: usize,
    metrics: &'a BTreeMap<String, f64>,
    val_curve: &'a [f64],
}

/// Writes every artifact of one seed into `dir`.
pub fn write_seed_artifacts(dir: &Path, cfg: &RunConfig, run: &TaskRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut seeded = cfg.clone();
    seeded.seeds = vec![run.seed];
    seeded.save(dir.join("config.toml"))?;
    write(&dir.join("seed.txt"), format!("{}\n", run.seed))?;
    run.search_log.save(dir.join("search_log.jsonl"))?;
    write(&dir.join("search_curve.csv"), search_curve_csv(&run.search_log))?;
    run.architecture.save(dir.join("architecture.json"))?;
    write(&dir.join("model.json"), serde_json::to_string(&SavedModel::of(run))?)?;
    write(&dir.join("retrain_curve.csv"), retrain_curve_csv(run))?;
    write(
        &dir.join("metrics.json"),
        json(&SeedMetrics {
            dataset: &run.dataset,
            task: run.task,
            seed: run.seed,
            best_epoch: run.best_epoch,
            metrics: &run.metrics,
            val_curve: &run.val_curve,
        })?,
    )?;
    let single = MetricsReport::from_runs(&run.dataset, run.task.name(), &[(run.seed, run.metrics.clone())])?;
    write(&dir.join("metrics.csv"), single.to_csv()?)?;
    write(&dir.join("timings.json"), json(&run.timings)?)
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct Execution {
    pub runs: Vec<TaskRun>,
    pub report: MetricsReport,
    pub dir: PathBuf,
}

/// Runs every configured seed (searching unless `arch` is given), writing
/// artifacts and the aggregate report.
pub fn execute(cfg: &RunConfig, arch: Option<&DerivedArchitecture>) -> Result<Execution> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!("{} on {}: seed {seed}", cfg.task, cfg.dataset_name);
        let task = prepare_task(&data, cfg, seed)?;
        let run = run_pipeline(task.as_ref(), cfg, seed, arch.cloned())?;
        write_seed_artifacts(&seed_dir(cfg, seed), cfg, &run)?;
        runs.push(run);
    }
    let per_seed: Vec<_> = runs.iter().map(|r| (r.seed, r.metrics.clone())).collect();
    let report = MetricsReport::from_runs(&cfg.dataset_name, cfg.task.name(), &per_seed)?;
    let dir = experiment_dir(cfg);
    report.save_json(dir.join("report.json"))?;
    write(&dir.join("report.csv"), report.to_csv()?)?;
    Ok(Execution { runs, report, dir })
}

/// Re-evaluates the saved model of a seed directory on `split`.
pub fn evaluate_seed_dir(dir: &Path, split: EvalSplit) -> Result<BTreeMap<String, f64>> {
    let cfg = RunConfig::load(dir.join("config.toml"))?;
    let seed_path = dir.join("seed.txt");
    let seed_text = std::fs::read_to_string(&seed_path).map_err(|e| Error::io(&seed_path, e))?;
    let seed: u64 = seed_text
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{}: invalid seed {:?}", seed_path.display(), seed_text.trim())))?;
    let net = SavedModel::load(dir.join("model.json"))?.into_network()?;
    let data = load_dataset(&cfg)?;
    let task = prepare_task(&data, &cfg, seed)?;
    if task.net_spec() != *net.spec() {
        return Err(Error::Contract("saved model does not match the configured task".into()));
    }
    task.metrics(&net, split)
}

/// One aggregate row per (dataset, task, metric).
pub fn summary_table(reports: &[MetricsReport]) -> String {
    let mut s = String::from("dataset,task,metric,n,mean,std\n");
    for r in reports {
        for (m, mean) in &r.mean {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.dataset, r.task, m, r.n, mean, r.std[m]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PartialConfig;

    #[test]
    fn summary_rows() {
        let runs: Vec<(u64, BTreeMap<String, f64>)> =
            (0..2).map(|s| (s, BTreeMap::from([("auc".into(), s as f64)]))).collect();
        let r = MetricsReport::from_runs("d", "lp_homo", &runs).unwrap();
        assert_eq!(summary_table(&[r]), "dataset,task,metric,n,mean,std\nd,lp_homo,auc,2,0.5,0.5\n");
    }

    #[test]
    fn node_dataset_needs_labels() {
        let dir = tempfile::tempdir().unwrap();
        let edges = dir.path().join("g.txt");
        std::fs::write(&edges, "0 1\n1 2\n").unwrap();
        let cfg = PartialConfig {
            task: Some(TaskKind::NodeClassification),
            dataset: Some(edges),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert!(matches!(load_dataset(&cfg), Err(Error::Config(_))));
    }
}
