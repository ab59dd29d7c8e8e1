use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve from rank statistics; ties count one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Contract("auc needs positive and negative scores".into()));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::Numeric("auc over NaN scores".into()));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the midrank sum of positives, kept integral.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j, midrank (i + 1 + j) / 2
        let twice_mid = (i + 1 + j) as u128;
        let npos = all[i..j].iter().filter(|x| x.1).count() as u128;
        rank2_sum += twice_mid * npos;
        i = j;
    }
    let (p, n) = (pos.len() as u128, neg.len() as u128);
    // U = R_pos - p(p+1)/2, doubled to stay integral.
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Filtered-ranking summary: mean reciprocal rank and Hits@N for each `N`.
pub fn mrr_hits(ranks: &[usize], ns: &[usize]) -> Result<BTreeMap<String, f64>> {
    if ranks.is_empty() {
        return Err(Error::Contract("no ranks".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Contract("ranks start at 1".into()));
    }
    let k = ranks.len() as f64;
    let mut out = BTreeMap::new();
    out.insert("mrr".to_string(), ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / k);
    for &n in ns {
        let hits = ranks.iter().filter(|&&r| r <= n).count() as f64;
        out.insert(format!("hits@{n}"), hits / k);
    }
    Ok(out)
}

/// Rank of `target` among `scores`, skipping `filtered` entries (other known
/// answers). Ties with the target are split evenly: `1 + greater + ties / 2`.
pub fn filtered_rank(scores: &[f64], target: usize, filtered: &[usize]) -> usize {
    let t = scores[target];
    let mut greater = 0;
    let mut ties = 0;
    for (e, &s) in scores.iter().enumerate() {
        if e == target || filtered.binary_search(&e).is_ok() {
            continue;
        }
        if s > t {
            greater += 1;
        } else if s == t {
            ties += 1;
        }
    }
    1 + greater + ties / 2
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Contract(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Per-metric values over seeds with their mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub task: String,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub per_seed: BTreeMap<String, Vec<f64>>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricsReport {
    /// `runs` holds `(seed, metric -> value)`; every run must report the same metrics.
    pub fn from_runs(dataset: &str, task: &str, runs: &[(u64, BTreeMap<String, f64>)]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Contract("report over zero runs".into()))?;
        let mut per_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (seed, m) in runs {
            if m.keys().ne(first.1.keys()) {
                return Err(Error::Contract(format!("seed {seed} reports different metrics")));
            }
            for (k, v) in m {
                per_seed.entry(k.clone()).or_default().push(*v);
            }
        }
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        for (k, vs) in &per_seed {
            let (m, s) = mean_std(vs);
            mean.insert(k.clone(), m);
            std.insert(k.clone(), s);
        }
        Ok(Self {
            dataset: dataset.to_string(),
            task: task.to_string(),
            seeds: runs.iter().map(|r| r.0).collect(),
            n: runs.len(),
            per_seed,
            mean,
            std,
        })
    }

    /// Flat `dataset,task,seed,metric,value` rows with a header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "task", "seed", "metric", "value"])
            .map_err(|e| Error::Contract(e.to_string()))?;
        for (metric, values) in &self.per_seed {
            for (seed, v) in self.seeds.iter().zip(values) {
                w.write_record([
                    self.dataset.as_str(),
                    self.task.as_str(),
                    &seed.to_string(),
                    metric,
                    &v.to_string(),
                ])
                .map_err(|e| Error::Contract(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Rebuilds reports from CSV rows (possibly covering several datasets/tasks).
    pub fn from_csv_rows(rows: &[CsvRow]) -> Result<Vec<Self>> {
        let mut groups: BTreeMap<(String, String), BTreeMap<u64, BTreeMap<String, f64>>> = BTreeMap::new();
        for r in rows {
            groups
                .entry((r.dataset.clone(), r.task.clone()))
                .or_default()
                .entry(r.seed)
                .or_default()
                .insert(r.metric.clone(), r.value);
        }
        groups
            .into_iter()
            .map(|((d, t), seeds)| {
                let runs: Vec<_> = seeds.into_iter().collect();
                Self::from_runs(&d, &t, &runs)
            })
            .collect()
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub dataset: String,
    pub task: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn read_csv_rows(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| Error::Ingestion {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })
        })
        .collect()
}
